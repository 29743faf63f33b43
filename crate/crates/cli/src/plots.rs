//! Static SVG charts drawn from a metrics report.

use std::path::Path;

use lghand::metrics::{MetricsReport, NamedError};
use plotters::prelude::*;

type DrawResult = Result<(), Box<dyn std::error::Error>>;

/// PCK fraction against threshold.
pub fn pck_curve(report: &MetricsReport, path: &Path) -> DrawResult {
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let xmax = report
        .pck
        .iter()
        .map(|p| p.threshold)
        .fold(1.0, f64::max);
    let mut chart = ChartBuilder::on(&root)
        .caption("Percentage of correct poses", ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0f64..xmax, 0f64..1.0)?;
    chart
        .configure_mesh()
        .x_desc("threshold (mm)")
        .y_desc("fraction of samples")
        .draw()?;
    chart.draw_series(LineSeries::new(
        report.pck.iter().map(|p| (p.threshold, p.fraction)),
        &BLUE,
    ))?;
    chart.draw_series(
        report
            .pck
            .iter()
            .map(|p| Circle::new((p.threshold, p.fraction), 3, BLUE.filled())),
    )?;
    root.present()?;
    Ok(())
}

/// One bar per group, labelled with the group name.
pub fn group_bars(groups: &[NamedError], title: &str, path: &Path) -> DrawResult {
    let root = SVGBackend::new(path, (640, 480)).into_drawing_area();
    root.fill(&WHITE)?;
    let ymax = groups.iter().map(|g| g.mpjpe).fold(0.0, f64::max).max(1e-3) * 1.15;
    let names: Vec<String> = groups.iter().map(|g| g.name.clone()).collect();
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(15)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(-0.5f64..groups.len() as f64 - 0.5, 0f64..ymax)?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_labels(groups.len().max(1))
        .x_label_formatter(&|x| {
            let i = x.round();
            if (x - i).abs() < 1e-6 && i >= 0.0 {
                names.get(i as usize).cloned().unwrap_or_default()
            } else {
                String::new()
            }
        })
        .y_desc("MPJPE (mm)")
        .draw()?;
    chart.draw_series(groups.iter().enumerate().map(|(i, g)| {
        let x = i as f64;
        Rectangle::new([(x - 0.35, 0.0), (x + 0.35, g.mpjpe)], BLUE.mix(0.7).filled())
    }))?;
    root.present()?;
    Ok(())
}

/// Writes `pck.svg`, `joint_types.svg` and `fingers.svg` into `dir`.
pub fn write_all(report: &MetricsReport, dir: &Path) -> DrawResult {
    pck_curve(report, &dir.join("pck.svg"))?;
    group_bars(&report.per_joint_type, "MPJPE per joint type", &dir.join("joint_types.svg"))?;
    group_bars(&report.per_finger, "MPJPE per finger", &dir.join("fingers.svg"))?;
    Ok(())
}
