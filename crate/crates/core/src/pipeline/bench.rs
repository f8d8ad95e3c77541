//! Solve-time and memory scaling of dense versus sparsified graphs.

use std::path::Path;
use std::time::Instant;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_puzzle, shuffle_puzzle, synth_image, ImageStyle, TaskKind};
use crate::pipeline::config::RunConfig;
use crate::pipeline::model::{build_graph, Model};
use crate::pipeline::solve::solve;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub pieces: usize,
    pub graph: String,
    pub edges: usize,
    pub virtual_edges: usize,
    /// Edge-state memory proxy in bytes.
    pub memory_proxy: usize,
    pub median_seconds: Option<f64>,
    /// Resident-set change across the timed solves, where available.
    pub rss_delta_kib: Option<i64>,
    pub status: String,
}

fn resident_kib() -> Option<i64> {
    let statm = std::fs::read_to_string("/proc/self/statm").ok()?;
    let pages: i64 = statm.split_whitespace().nth(1)?.parse().ok()?;
    Some(pages * 4)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Times puzzle solves for every size in `cfg.bench.sizes` (each a perfect
/// square) with a randomly initialized model.
pub fn bench(cfg: &RunConfig) -> Result<Vec<BenchRow>> {
    let b = &cfg.bench;
    if b.repeats == 0 || b.solve_steps == 0 {
        return Err(Error::Config("bench needs positive repeats and solve_steps".into()));
    }
    let mut base = cfg.clone();
    base.task = TaskKind::Puzzle2d;
    base.denoiser.single_step = false;
    base.schedule.stride = base.schedule.steps.div_ceil(b.solve_steps);
    let model = Model::new(&base)?;
    let mut rows = Vec::new();
    for &m in &b.sizes {
        let n = (m as f64).sqrt().round() as usize;
        if n * n != m || n == 0 {
            return Err(Error::Config(format!("bench size {m} is not a square puzzle")));
        }
        let img = synth_image(n * b.patch_size, ImageStyle::Structured, m as u64);
        let task = shuffle_puzzle(&generate_puzzle(&img, n, true, 0.0, m as u64)?, m as u64);
        for sparse in [false, true] {
            let mut run = base.clone();
            run.sparsify.enabled = sparse;
            let graph = build_graph(m, &run.sparsify, 0)?;
            let mut row = BenchRow {
                pieces: m,
                graph: if sparse { "sparse" } else { "dense" }.into(),
                edges: graph.edges().len(),
                virtual_edges: graph.virtual_edge_count(),
                memory_proxy: graph.edge_memory_estimate(),
                median_seconds: None,
                rss_delta_kib: None,
                status: "ok".into(),
            };
            if row.edges + row.virtual_edges > b.max_edges {
                row.status = format!("skipped: {} edges exceed the budget of {}", row.edges + row.virtual_edges, b.max_edges);
                rows.push(row);
                continue;
            }
            let before = resident_kib();
            let mut times = Vec::with_capacity(b.repeats);
            for r in 0..b.repeats {
                let start = Instant::now();
                solve(&model, &task, &run, r as u64)?;
                times.push(start.elapsed().as_secs_f64());
            }
            row.median_seconds = Some(median(times));
            row.rss_delta_kib = before.zip(resident_kib()).map(|(a, z)| z - a);
            rows.push(row);
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("pieces,graph,edges,virtual_edges,memory_proxy_bytes,median_seconds,rss_delta_kib,status\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.pieces,
            r.graph,
            r.edges,
            r.virtual_edges,
            r.memory_proxy,
            r.median_seconds.map_or(String::new(), |s| format!("{s:.6}")),
            r.rss_delta_kib.map_or(String::new(), |k| k.to_string()),
            r.status
        ));
    }
    out
}

fn plot_error(e: impl std::fmt::Display) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn line_chart(path: &Path, title: &str, y_label: &str, series: &[(&str, Vec<(f64, f64)>)]) -> Result<()> {
    let root = SVGBackend::new(path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_error)?;
    let xs = series.iter().flat_map(|(_, s)| s.iter().map(|p| p.0));
    let ys = series.iter().flat_map(|(_, s)| s.iter().map(|p| p.1));
    let x_max = xs.fold(1.0f64, f64::max) * 1.05;
    let y_max = ys.fold(f64::MIN_POSITIVE, f64::max) * 1.1;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(70)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(plot_error)?;
    chart.configure_mesh().x_desc("pieces").y_desc(y_label).draw().map_err(plot_error)?;
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts.clone(), color.stroke_width(2)))
            .map_err(plot_error)?
            .label(*name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
        chart.draw_series(pts.iter().map(|p| Circle::new(*p, 3, color.filled()))).map_err(plot_error)?;
    }
    chart.configure_series_labels().border_style(BLACK).background_style(WHITE).draw().map_err(plot_error)?;
    root.present().map_err(plot_error)?;
    Ok(())
}

/// Writes `bench.csv`, `bench.json`, `bench_time.svg` and `bench_edges.svg`.
pub fn write_outputs(rows: &[BenchRow], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("bench.csv"), to_csv(rows))?;
    std::fs::write(dir.join("bench.json"), serde_json::to_string_pretty(rows)?)?;
    let series = |graph: &str, f: &dyn Fn(&BenchRow) -> Option<f64>| {
        rows.iter().filter(|r| r.graph == graph).filter_map(|r| f(r).map(|y| (r.pieces as f64, y))).collect::<Vec<_>>()
    };
    let time = |r: &BenchRow| r.median_seconds;
    line_chart(&dir.join("bench_time.svg"), "solve time", "seconds", &[("dense", series("dense", &time)), ("sparse", series("sparse", &time))])?;
    let edges = |r: &BenchRow| Some((r.edges + r.virtual_edges) as f64);
    line_chart(&dir.join("bench_edges.svg"), "graph size", "edges", &[("dense", series("dense", &edges)), ("sparse", series("sparse", &edges))])?;
    Ok(())
}
