//! CSV and PGM artifacts: distributions, stage summaries, learning curves,
//! distance tables, audits, embedding parameters and trajectories.

use std::io::{Read, Write};

use thiserror::Error;

use crate::curriculum::{Audit, CurriculumTrace, CurvePoint};
use crate::embed::{EpochReport, MlpParams, Net};
use crate::envs::{Cell, Maze, TrajectoryStep};
use crate::metrics::DistanceTable;
use crate::ot::{Categorical, OtError, Particles, TaskDistribution};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Ot(#[from] OtError),
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// Categorical: `context,weight`; particles: `x0,..,x{d-1},weight`.
pub fn write_distribution<W: Write>(dist: &TaskDistribution, w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    match dist {
        TaskDistribution::Categorical(c) => {
            out.write_record(["context", "weight"])?;
            for (i, p) in c.weights().iter().enumerate() {
                out.write_record([i.to_string(), num(*p)])?;
            }
        }
        TaskDistribution::Particles(p) => {
            let mut header: Vec<String> = (0..p.dim()).map(|k| format!("x{k}")).collect();
            header.push("weight".into());
            out.write_record(&header)?;
            for (pt, wt) in p.points().iter().zip(p.weights()) {
                let mut row: Vec<String> = pt.iter().map(|v| num(*v)).collect();
                row.push(num(*wt));
                out.write_record(&row)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

fn parse(field: &str, line: usize) -> Result<f64, IoError> {
    field.trim().parse().map_err(|_| IoError::Format(format!("line {line}: not a number: {field:?}")))
}

/// Reads either layout written by [`write_distribution`]; weights are
/// renormalized.
pub fn read_distribution<R: Read>(r: R) -> Result<TaskDistribution, IoError> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(r);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.last().map(String::as_str) != Some("weight") || header.len() < 2 {
        return Err(IoError::Format("last column must be `weight`".into()));
    }
    let rows: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>()?;
    if header[0] == "context" && header.len() == 2 {
        let mut weights = vec![0.0; rows.len()];
        for (i, row) in rows.iter().enumerate() {
            let idx: usize = row[0].trim().parse().map_err(|_| IoError::Format(format!("line {}: bad context", i + 2)))?;
            if idx >= rows.len() {
                return Err(IoError::Format(format!("line {}: context {idx} out of range", i + 2)));
            }
            weights[idx] = parse(&row[1], i + 2)?;
        }
        return Ok(Categorical::normalized(weights)?.into());
    }
    let dim = header.len() - 1;
    let mut points = Vec::with_capacity(rows.len());
    let mut weights = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let vals = row.iter().map(|f| parse(f, i + 2)).collect::<Result<Vec<f64>, _>>()?;
        points.push(vals[..dim].to_vec());
        weights.push(vals[dim]);
    }
    Ok(Particles::normalized(points, weights)?.into())
}

/// One row per stage.
pub fn write_stage_summary<W: Write>(trace: &CurriculumTrace, w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record([
        "k",
        "alpha",
        "env_steps",
        "rounds",
        "final_return",
        "cleared",
        "eval_return",
        "reward_samples",
        "fallback",
        "projected",
    ])?;
    for s in &trace.stages {
        let e = s.embedding.as_ref();
        out.write_record([
            s.k.to_string(),
            num(s.alpha),
            s.env_steps.to_string(),
            s.rounds.to_string(),
            opt(s.final_return),
            s.cleared.to_string(),
            opt(s.eval_return),
            e.map(|e| e.reward_samples.to_string()).unwrap_or_default(),
            e.map(|e| e.fallback.to_string()).unwrap_or_default(),
            e.map(|e| e.projected.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curve<W: Write>(curve: &[CurvePoint], w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["env_steps", "eval_return_mean", "eval_return_std"])?;
    for p in curve {
        out.write_record([p.env_steps.to_string(), num(p.mean_return), num(p.std_return)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_curve<R: Read>(r: R) -> Result<Vec<CurvePoint>, IoError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut curve = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        if row.len() != 3 {
            return Err(IoError::Format(format!("line {}: expected 3 fields", i + 2)));
        }
        let env_steps = row[0].trim().parse().map_err(|_| IoError::Format(format!("line {}: bad step count", i + 2)))?;
        curve.push(CurvePoint { env_steps, mean_return: parse(&row[1], i + 2)?, std_return: parse(&row[2], i + 2)? });
    }
    Ok(curve)
}

/// Square matrix, no header.
pub fn write_table<W: Write>(table: &DistanceTable, w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    for row in table.values().rows() {
        out.write_record(row.iter().map(|v| num(*v)))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_audit<W: Write>(audit: &Audit, w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["k", "alpha", "gap", "w", "ratio"])?;
    for r in &audit.rows {
        out.write_record([r.k.to_string(), num(r.alpha), num(r.gap), num(r.w), num(r.ratio)])?;
    }
    out.flush()?;
    Ok(())
}

/// `net,layer,kind,row,col,value`; biases leave `col` empty.
pub fn write_params<W: Write>(params: &MlpParams, w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["net", "layer", "kind", "row", "col", "value"])?;
    for e in params.entries() {
        let net = match e.net {
            Net::Encoder => "encoder",
            Net::Decoder => "decoder",
        };
        let (kind, col) = match e.col {
            Some(c) => ("weight", c.to_string()),
            None => ("bias", String::new()),
        };
        out.write_record([net.to_string(), e.layer.to_string(), kind.into(), e.row.to_string(), col, num(e.value)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_embed_report<W: Write>(report: &[EpochReport], w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["epoch", "loss", "distance_term", "recon_term"])?;
    for r in report {
        out.write_record([r.epoch.to_string(), num(r.loss), num(r.distance_term), num(r.recon_term)])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectory<W: Write>(steps: &[TrajectoryStep], w: W) -> Result<(), IoError> {
    let mut out = writer(w);
    out.write_record(["t", "s", "a", "r"])?;
    for s in steps {
        out.write_record([s.t.to_string(), s.state.to_string(), s.action.to_string(), num(s.reward)])?;
    }
    out.flush()?;
    Ok(())
}

/// Gray level of a wall cell.
pub const WALL_GRAY: u8 = 128;

fn write_pgm<W: Write>(width: usize, height: usize, pixels: &[u8], mut w: W) -> Result<(), IoError> {
    write!(w, "P5\n{width} {height}\n255\n")?;
    w.write_all(pixels)?;
    Ok(())
}

fn darkness(p: f64, max: f64) -> u8 {
    if max <= 0.0 {
        return 255;
    }
    (255.0 * (1.0 - (p / max).clamp(0.0, 1.0))).round() as u8
}

/// Binary PGM of a context distribution over a maze, `scale` pixels per
/// cell: probability maps linearly to darkness (the most likely context is
/// black), walls are mid-gray, the goal is white.
pub fn maze_heatmap<W: Write>(maze: &Maze, dist: &Categorical, scale: usize, w: W) -> Result<(), IoError> {
    let n = maze.context_states().len();
    if dist.len() != n {
        return Err(IoError::Format(format!("distribution over {} contexts, maze has {n}", dist.len())));
    }
    let layout = maze.layout();
    let max = dist.weights().iter().cloned().fold(0.0, f64::max);
    let scale = scale.max(1);
    let (h, wd) = (layout.height(), layout.width());
    let mut pixels = vec![0u8; h * wd * scale * scale];
    for r in 0..h {
        for c in 0..wd {
            let g = match layout.cell(r, c) {
                Cell::Wall => WALL_GRAY,
                Cell::Goal => 255,
                Cell::Free => match maze.context_at(r, c) {
                    Some(k) => darkness(dist.weights()[k], max),
                    None => 255,
                },
            };
            for dy in 0..scale {
                let row = (r * scale + dy) * wd * scale;
                pixels[row + c * scale..row + (c + 1) * scale].fill(g);
            }
        }
    }
    write_pgm(wd * scale, h * scale, &pixels, w)
}

/// Binary PGM of a distance table, one pixel per entry, larger distances
/// darker.
pub fn table_heatmap<W: Write>(table: &DistanceTable, w: W) -> Result<(), IoError> {
    let n = table.len();
    let max = table.max();
    let pixels: Vec<u8> = table.values().iter().map(|v| darkness(*v, max)).collect();
    write_pgm(n, n, &pixels, w)
}
