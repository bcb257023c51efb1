use std::path::Path;

use ndarray::Axis;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{checkpoint, EmbeddingTable};
use crate::corpus::IdMaps;
use crate::{Error, Result};

/// Carries rows of `source` (laid out by `source_ids`) over to a table laid
/// out by `ids`. Entities unknown to the source keep their row from `fresh`.
/// The mask token is copied.
pub fn remap_table(
    source: &EmbeddingTable,
    source_ids: &IdMaps,
    ids: &IdMaps,
    fresh: EmbeddingTable,
) -> Result<(EmbeddingTable, usize)> {
    if source.dim() != fresh.dim() {
        return Err(Error::Checkpoint(format!(
            "checkpoint has d_e = {}, configured d_e = {}",
            source.dim(),
            fresh.dim()
        )));
    }
    let mut out = fresh;
    let mut missing = 0usize;
    for (u, raw) in ids.users.iter().enumerate() {
        match source_ids.users.get(raw) {
            Some(s) => out.weights.row_mut(u).assign(&source.weights.row(s as usize)),
            None => missing += 1,
        }
    }
    for (v, raw) in ids.items.iter().enumerate() {
        match source_ids.items.get(raw) {
            Some(s) => {
                let row = source.item_row(s);
                out.weights
                    .index_axis_mut(Axis(0), ids.users.len() + v)
                    .assign(&source.weights.row(row));
            }
            None => missing += 1,
        }
    }
    out.mask_token.assign(&source.mask_token);
    Ok((out, missing))
}

/// Loads a checkpoint and aligns it to the current corpus. Entities absent
/// from the checkpoint are drawn fresh from `N(0, init_std^2)` with `seed`.
pub fn init_from_checkpoint(
    path: &Path,
    ids: &IdMaps,
    dim: usize,
    init_std: f64,
    seed: u64,
) -> Result<EmbeddingTable> {
    let (source, source_ids) = checkpoint::load(path)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fresh = EmbeddingTable::random(ids.users.len(), ids.items.len(), dim, init_std, &mut rng);
    let (table, missing) = remap_table(&source, &source_ids, ids, fresh)?;
    if missing > 0 {
        log::info!(
            "{missing} of {} entities not in {}; freshly initialized",
            ids.n_nodes(),
            path.display()
        );
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::InteractionSet;

    fn ids(pairs: &[(&str, &str)]) -> IdMaps {
        InteractionSet::from_pairs(pairs).ids
    }

    #[test]
    fn round_trip_is_identical_after_f32() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.ckpt");
        let id = ids(&[("a", "x"), ("b", "y")]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = EmbeddingTable::random(2, 2, 4, 0.1, &mut rng);
        t.weights.mapv_inplace(|v| v as f32 as f64);
        t.mask_token.mapv_inplace(|v| v as f32 as f64);
        checkpoint::save(&p, &t, &id).unwrap();
        let back = init_from_checkpoint(&p, &id, 4, 0.1, 9).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn missing_item_is_fresh_rest_copied() {
        let old = ids(&[("a", "x"), ("b", "y")]);
        let new = ids(&[("b", "y"), ("a", "z"), ("a", "x")]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let src = EmbeddingTable::random(2, 2, 3, 1.0, &mut rng);
        let fresh = EmbeddingTable::random(2, 3, 3, 1.0, &mut rng);
        let (t, missing) = remap_table(&src, &old, &new, fresh.clone()).unwrap();
        assert_eq!(missing, 1);
        // new users: b, a ; new items: y, z, x
        assert_eq!(t.weights.row(0), src.weights.row(1));
        assert_eq!(t.weights.row(1), src.weights.row(0));
        assert_eq!(t.weights.row(2), src.weights.row(3));
        assert_eq!(t.weights.row(3), fresh.weights.row(3));
        assert_eq!(t.weights.row(4), src.weights.row(2));
        assert_eq!(t.mask_token, src.mask_token);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let id = ids(&[("a", "x")]);
        let src = EmbeddingTable::zeros(1, 1, 3);
        let fresh = EmbeddingTable::zeros(1, 1, 4);
        assert!(matches!(remap_table(&src, &id, &id, fresh), Err(Error::Checkpoint(_))));
    }
}
