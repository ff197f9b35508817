//! SVG figures for one trajectory.

use std::ops::Range;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};
use plotters::coord::types::RangedCoordf64;
use plotters::prelude::*;
use ptzgs_core::Trajectory;

/// Values below this are drawn at the floor of log-scaled panels.
const LOG_FLOOR: f64 = 1e-16;
const SIZE: (u32, u32) = (900, 560);

pub struct PlotFiles {
    pub states: PathBuf,
    pub residual: PathBuf,
    pub surface: PathBuf,
    pub f_error: PathBuf,
}

impl PlotFiles {
    pub fn in_dir(dir: &Path) -> Self {
        PlotFiles {
            states: dir.join("states.svg"),
            residual: dir.join("residual.svg"),
            surface: dir.join("surface.svg"),
            f_error: dir.join("f_error.svg"),
        }
    }
}

fn time_range(traj: &Trajectory) -> Range<f64> {
    traj.first().t..traj.last().t
}

fn linear_range(values: impl Iterator<Item = f64>) -> Range<f64> {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    let pad = ((hi - lo) * 0.05).max(1e-9);
    (lo - pad)..(hi + pad)
}

fn log_range(values: impl Iterator<Item = f64>) -> Range<f64> {
    let hi = values.fold(LOG_FLOOR, f64::max);
    LOG_FLOOR..(hi * 2.0)
}

fn err<E: std::fmt::Debug>(e: E) -> anyhow::Error {
    anyhow!("plot rendering failed: {e:?}")
}

fn agent_color(i: usize) -> RGBColor {
    let p = Palette99::pick(i).to_rgba();
    RGBColor(p.0, p.1, p.2)
}

/// Per-agent series with a legend entry each.
fn draw_agents<'a, DB: DrawingBackend + 'a, Y>(
    chart: &mut ChartContext<'a, DB, Cartesian2d<RangedCoordf64, Y>>,
    traj: &Trajectory,
    label: impl Fn(usize) -> String,
    value: impl Fn(&ptzgs_core::Sample, usize) -> f64,
    series: usize,
) -> Result<()>
where
    Y: Ranged<ValueType = f64>,
    DB::ErrorType: 'static,
{
    for k in 0..series {
        let color = agent_color(k);
        chart
            .draw_series(LineSeries::new(
                traj.samples.iter().map(|s| (s.t, value(s, k))),
                color.stroke_width(2),
            ))
            .map_err(err)?
            .label(label(k))
            .legend(move |(x, y)| {
                PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2))
            });
    }
    Ok(())
}

fn finish<'a, DB: DrawingBackend + 'a, Y>(
    chart: &mut ChartContext<'a, DB, Cartesian2d<RangedCoordf64, Y>>,
) -> Result<()>
where
    Y: Ranged<ValueType = f64>,
    DB::ErrorType: 'static,
{
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .position(SeriesLabelPosition::UpperRight)
        .draw()
        .map_err(err)
}

pub fn plot_states(traj: &Trajectory, path: &Path) -> Result<()> {
    let (n, dim) = (traj.agent_count(), traj.dim());
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let y = linear_range(
        traj.samples
            .iter()
            .flat_map(|s| s.state.agents.iter().flat_map(|a| a.x.iter().copied())),
    );
    let mut chart = ChartBuilder::on(&root)
        .caption("agent states", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(time_range(traj), y)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .y_desc("x_i,k")
        .draw()
        .map_err(err)?;
    draw_agents(
        &mut chart,
        traj,
        |k| format!("x{}_{}", k / dim + 1, k % dim + 1),
        |s, k| s.state.agents[k / dim].x[k % dim],
        n * dim,
    )?;
    finish(&mut chart)?;
    root.present().map_err(err)
}

pub fn plot_residual(traj: &Trajectory, path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let y = log_range(traj.samples.iter().flat_map(|s| s.diag.er.iter().copied()));
    let mut chart = ChartBuilder::on(&root)
        .caption("normalized residual Er", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(time_range(traj), y.clone().log_scale())
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .y_desc("Er")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(err)?;
    draw_agents(
        &mut chart,
        traj,
        |i| format!("agent {}", i + 1),
        |s, i| s.diag.er[i].max(LOG_FLOOR),
        traj.agent_count(),
    )?;
    for &d in &traj.stage_boundaries {
        chart
            .draw_series(LineSeries::new(
                vec![(d, y.start), (d, y.end)],
                BLACK.mix(0.6).stroke_width(1),
            ))
            .map_err(err)?;
    }
    finish(&mut chart)?;
    root.present().map_err(err)
}

pub fn plot_surface(traj: &Trajectory, path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let y = linear_range(
        traj.samples
            .iter()
            .flat_map(|s| s.diag.s_norm.iter().copied()),
    );
    let mut chart = ChartBuilder::on(&root)
        .caption("sliding surface norms", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(time_range(traj), 0.0..y.end)
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .y_desc("|s_i|")
        .draw()
        .map_err(err)?;
    draw_agents(
        &mut chart,
        traj,
        |i| format!("agent {}", i + 1),
        |s, i| s.diag.s_norm[i],
        traj.agent_count(),
    )?;
    finish(&mut chart)?;
    root.present().map_err(err)
}

pub fn plot_f_error(traj: &Trajectory, path: &Path) -> Result<()> {
    let root = SVGBackend::new(path, SIZE).into_drawing_area();
    root.fill(&WHITE).map_err(err)?;
    let y = log_range(traj.samples.iter().map(|s| s.diag.f_err));
    let mut chart = ChartBuilder::on(&root)
        .caption("global function error", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(time_range(traj), y.log_scale())
        .map_err(err)?;
    chart
        .configure_mesh()
        .x_desc("t (s)")
        .y_desc("|f(x) - f(x*)|")
        .y_label_formatter(&|v| format!("{v:.0e}"))
        .draw()
        .map_err(err)?;
    chart
        .draw_series(LineSeries::new(
            traj.samples
                .iter()
                .map(|s| (s.t, s.diag.f_err.max(LOG_FLOOR))),
            BLUE.stroke_width(2),
        ))
        .map_err(err)?;
    root.present().map_err(err)
}

pub fn emit_plots(traj: &Trajectory, files: &PlotFiles) -> Result<()> {
    if traj.samples.is_empty() {
        return Err(anyhow!("cannot plot an empty trajectory"));
    }
    plot_states(traj, &files.states)?;
    plot_residual(traj, &files.residual)?;
    plot_surface(traj, &files.surface)?;
    plot_f_error(traj, &files.f_error)?;
    Ok(())
}
