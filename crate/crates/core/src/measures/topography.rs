// SPDX-License-Identifier: Apache-2.0

//! A deterministic 2D layout with one measure as height, for landscape
//! style rendering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{unary, IncidenceView, Measure, MeasureConfig, MeasureError};
use crate::ids::PieceId;

const LAYOUT_ITERATIONS: usize = 120;

#[derive(Clone, Debug, PartialEq)]
pub struct TopoEntry {
    pub id: PieceId,
    pub x: f64,
    pub y: f64,
    pub height: f64,
}

/// Force-directed layout (fixed iteration count, seeded start) with the
/// named measure as height. Entries are sorted by id.
pub fn topography(
    view: &IncidenceView,
    cfg: &MeasureConfig,
    measure: &str,
    seed: u64,
) -> Result<Vec<TopoEntry>, MeasureError> {
    let measure: Measure = measure.parse()?;
    if !matches!(
        measure,
        Measure::Depth | Measure::Utility | Measure::Implantation | Measure::Visibility
    ) {
        return Err(MeasureError::UnknownMeasure(measure.name().to_string()));
    }
    let positions = layout(view, seed);
    view.pieces
        .iter()
        .zip(positions)
        .map(|(p, (x, y))| {
            Ok(TopoEntry {
                id: p.id,
                x,
                y,
                height: unary(view, measure, p.id, cfg)?,
            })
        })
        .collect()
}

fn layout(view: &IncidenceView, seed: u64) -> Vec<(f64, f64)> {
    let n = view.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    if n < 2 {
        return pos.into_iter().map(|_| (0.0, 0.0)).collect();
    }
    let k = (4.0 / n as f64).sqrt();
    let mut temperature = 0.1;
    for _ in 0..LAYOUT_ITERATIONS {
        let mut disp = vec![(0.0f64, 0.0f64); n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                let d = (dx * dx + dy * dy).sqrt().max(1e-6);
                let f = k * k / d;
                disp[i].0 += dx / d * f;
                disp[i].1 += dy / d * f;
                disp[j].0 -= dx / d * f;
                disp[j].1 -= dy / d * f;
            }
        }
        for i in 0..n {
            for &j in view.near[i].iter().filter(|&&j| j > i) {
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                let d = (dx * dx + dy * dy).sqrt().max(1e-6);
                let f = d * d / k;
                disp[i].0 -= dx / d * f;
                disp[i].1 -= dy / d * f;
                disp[j].0 += dx / d * f;
                disp[j].1 += dy / d * f;
            }
        }
        for i in 0..n {
            let (dx, dy) = disp[i];
            let len = (dx * dx + dy * dy).sqrt().max(1e-9);
            let step = len.min(temperature);
            pos[i].0 += dx / len * step;
            pos[i].1 += dy / len * step;
        }
        temperature *= 0.97;
    }
    pos
}
