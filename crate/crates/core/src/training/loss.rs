use crate::data::SatTile;
use crate::error::{contract_err, Result};
use crate::numerics::{Tape, Tensor, Var};
use serde::{Deserialize, Serialize};

/// One candidate set's loss with its tile weights `β = softmax(A)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub loss: f32,
    pub beta: Vec<f32>,
    pub argmax: usize,
}

impl LossReport {
    pub(crate) fn new(loss: f32, beta: Vec<f32>) -> Self {
        let argmax = argmax(&beta);
        LossReport { loss, beta, argmax }
    }
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Tiles as rows of an `N×(d·d·3)` matrix scaled to `[0, 1]`.
pub fn tile_matrix(tiles: &[&SatTile]) -> Result<Tensor> {
    let first = tiles
        .first()
        .ok_or_else(|| contract_err!("ecml loss needs at least one tile"))?;
    let (w, h) = (first.width(), first.height());
    let mut data = Vec::with_capacity(tiles.len() * w * h * 3);
    for t in tiles {
        if t.width() != w || t.height() != h {
            return Err(contract_err!(
                "tile {}×{} differs from {w}×{h}",
                t.width(),
                t.height()
            ));
        }
        data.extend(t.as_raw().iter().map(|&v| v as f32 / 255.0));
    }
    Tensor::new(&[tiles.len(), w * h * 3], data)
}

/// Records the loss for scores `a` (`N` elements) against constant candidate
/// tiles (`N×P`) and target (`P`). Returns `(loss, β)`.
pub fn ecml_loss_on_tape(tape: &mut Tape, a: Var, tiles: &Tensor, target: &Tensor) -> Result<(Var, Var)> {
    let n = tape.value(a).len();
    match tiles.shape() {
        &[rows, p] if rows == n && p == target.len() => {}
        s => {
            return Err(contract_err!(
                "{n} scores against tiles {s:?} and a target of {} values",
                target.len()
            ))
        }
    }
    let row = tape.reshape(a, &[1, n])?;
    let beta = tape.softmax(row)?;
    let tiles = tape.constant(tiles.clone());
    let predicted = tape.matmul(beta, tiles)?;
    let loss = tape.l1_mean(predicted, target)?;
    Ok((loss, beta))
}

/// Softmax-weighted tile reconstruction error of the true tile, as a mean
/// absolute deviation over pixels scaled to `[0, 1]`.
pub fn ecml_loss(a: &[f32], tiles: &[&SatTile], true_tile: &SatTile) -> Result<LossReport> {
    if a.len() != tiles.len() {
        return Err(contract_err!("{} scores for {} tiles", a.len(), tiles.len()));
    }
    let m = tile_matrix(tiles)?;
    let target = tile_matrix(&[true_tile])?;
    let len = target.len();
    let target = target.reshape(&[len])?;
    let mut tape = Tape::new();
    let av = tape.constant(Tensor::new(&[a.len()], a.to_vec())?);
    let (loss, beta) = ecml_loss_on_tape(&mut tape, av, &m, &target)?;
    Ok(LossReport::new(
        tape.value(loss).item(),
        tape.value(beta).data().to_vec(),
    ))
}
