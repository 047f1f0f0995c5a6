use gearsim_core::nn::{NetSpec, Network, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Network::<f32>::init(NetSpec::conv_trunk([64, 64, 3], 8), &mut rng).unwrap();
    let single = Tensor::<f32>::from_vec(&[1,64,64,3], (0..64*64*3).map(|i| (i%251) as f32/251.0).collect()).unwrap();
    let batch = Tensor::<f32>::from_vec(&[64,64,64,3], (0..64*64*64*3).map(|i| (i%251) as f32/251.0).collect()).unwrap();

    let t = Instant::now();
    for _ in 0..200 { let _ = net.forward(&single).unwrap(); }
    println!("single forward: {:.3} ms", t.elapsed().as_secs_f64()*1000.0/200.0);

    let t = Instant::now();
    for _ in 0..20 { let _ = net.forward(&batch).unwrap(); }
    println!("batch-64 forward: {:.2} ms", t.elapsed().as_secs_f64()*1000.0/20.0);

    let t = Instant::now();
    let mut n = 0;
    for _ in 0..20 {
        let (cache, out) = net.forward_cached(&batch).unwrap();
        let dy = Tensor::from_vec(&[64, 8], out.data().to_vec()).unwrap();
        let g = net.backward(&cache, &dy).unwrap();
        n += g.len();
    }
    println!("batch-64 fwd+bwd: {:.2} ms  ({} grads)", t.elapsed().as_secs_f64()*1000.0/20.0, n/20);
}
