//! Draw a smoothed, log-scaled line chart from synthetic loss curves.

use intentdrive::harness::{line_chart_svg, smooth};

fn main() -> std::io::Result<()> {
    let curve = |scale: f64, rate: f64| -> Vec<(f64, f64)> {
        (0..500)
            .map(|i| {
                let x = i as f64;
                let wobble = 1.0 + 0.3 * (x * 0.7).sin();
                (x, scale * (-rate * x).exp() * wobble + 0.01)
            })
            .collect()
    };
    let series = vec![
        ("traj".to_string(), smooth(&curve(5.0, 0.01), 0.05)),
        ("recon".to_string(), smooth(&curve(1.0, 0.004), 0.05)),
    ];
    std::fs::write("curves.svg", line_chart_svg("losses", "step", &series, true))?;
    println!("wrote curves.svg");
    Ok(())
}
