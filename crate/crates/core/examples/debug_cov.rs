use gearsim_core::baseline::{spiral_plan, SpiralParams};
use gearsim_core::geom::Vec2Mm;

fn main() {
    let params = SpiralParams::default();
    let plan = spiral_plan(Vec2Mm::new(0.0, 0.0), &params);
    let grid = 0.1;
    let n = (params.max_radius_mm / grid).floor() as i64;
    let mut worst = (0.0f64, Vec2Mm::new(0.0, 0.0));
    for iy in -n..=n {
        for ix in -n..=n {
            let p = Vec2Mm::new(ix as f64 * grid, iy as f64 * grid);
            if p.norm() > params.max_radius_mm { continue; }
            let best = plan.iter().map(|w| p.distance(*w)).fold(f64::INFINITY, f64::min);
            if best > worst.0 { worst = (best, p); }
        }
    }
    println!("worst {:.4} at ({:.2},{:.2}) r={:.3}", worst.0, worst.1.x, worst.1.y, worst.1.norm());
    let last = plan.last().unwrap();
    println!("plan len {}, last wp radius {:.3}", plan.len(), last.norm());
}
