use gearsim_core::render::{Renderer, SceneParams};
use gearsim_core::geom::Vec2Mm;
use std::time::Instant;

fn main() {
    let r = Renderer::new(SceneParams::default());
    let t = Instant::now();
    let mut acc = 0.0f32;
    for i in 0..500 {
        let img = r.observation(Vec2Mm::new((i % 35) as f64 - 17.5, (i % 29) as f64 - 14.5));
        acc += img.pixels[0];
    }
    println!("render: {:.3} ms  (checksum {acc})", t.elapsed().as_secs_f64()*1000.0/500.0);
}
