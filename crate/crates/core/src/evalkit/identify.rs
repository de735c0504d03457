//! Closed-set identification: cumulative match characteristic.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numcore::{cosine_matrix, Matrix};

/// Rank of every probe: one plus the number of other gallery subjects scoring
/// at least as high as the true one. A subject scores the best cosine over
/// its gallery entries. Ties count against the probe.
pub fn probe_ranks(
    gallery: &Matrix,
    gallery_ids: &[u32],
    probes: &Matrix,
    probe_ids: &[u32],
) -> Result<Vec<usize>> {
    if gallery.rows() != gallery_ids.len() || probes.rows() != probe_ids.len() {
        return Err(Error::shape("cmc", "feature rows and id counts differ"));
    }
    if gallery.cols() != probes.cols() {
        return Err(Error::shape(
            "cmc",
            format!("gallery dim {} vs probe dim {}", gallery.cols(), probes.cols()),
        ));
    }
    let mut subjects: BTreeMap<u32, usize> = BTreeMap::new();
    for &id in gallery_ids {
        let next = subjects.len();
        subjects.entry(id).or_insert(next);
    }
    if let Some(missing) = probe_ids.iter().find(|id| !subjects.contains_key(id)) {
        return Err(Error::contract(format!("probe subject {missing} has no gallery entry")));
    }
    // cosine_matrix wants class vectors as columns
    let cos = cosine_matrix(probes, &gallery.transpose())?;
    let mut best = vec![f64::NEG_INFINITY; subjects.len()];
    Ok((0..probes.rows())
        .map(|p| {
            best.fill(f64::NEG_INFINITY);
            for (g, id) in gallery_ids.iter().enumerate() {
                let slot = &mut best[subjects[id]];
                *slot = slot.max(cos.get(p, g));
            }
            let truth = subjects[&probe_ids[p]];
            let target = best[truth];
            1 + best
                .iter()
                .enumerate()
                .filter(|&(s, &v)| s != truth && v >= target)
                .count()
        })
        .collect())
}

/// Identification rate at ranks `1..=max_rank`.
pub fn cmc(
    gallery: &Matrix,
    gallery_ids: &[u32],
    probes: &Matrix,
    probe_ids: &[u32],
    max_rank: usize,
) -> Result<Vec<f64>> {
    if probes.rows() == 0 {
        return Err(Error::contract("cmc needs at least one probe"));
    }
    let ranks = probe_ranks(gallery, gallery_ids, probes, probe_ids)?;
    Ok(rates_from_ranks(&ranks, max_rank))
}

pub fn rates_from_ranks(ranks: &[usize], max_rank: usize) -> Vec<f64> {
    (1..=max_rank)
        .map(|r| ranks.iter().filter(|&&k| k <= r).count() as f64 / ranks.len() as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Rng;
    use proptest::prelude::*;

    #[test]
    fn probe_equal_to_gallery_is_rank_one() {
        let g = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.2]]).unwrap();
        let rates = cmc(&g, &[5, 6, 7], &g, &[5, 6, 7], 3).unwrap();
        assert_eq!(rates, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn ties_are_pessimistic() {
        let g = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let p = Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        assert_eq!(probe_ranks(&g, &[0, 1], &p, &[1]).unwrap(), vec![2]);
        assert_eq!(probe_ranks(&g, &[0, 1], &p, &[0]).unwrap(), vec![2]);
    }

    #[test]
    fn missing_subject_is_an_error() {
        let g = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(cmc(&g, &[0], &g, &[3], 1).is_err());
    }

    /// Literal oracle: sort every gallery entry by score descending with the
    /// probe's own subject placed after equal scores, then find the position
    /// of the first true entry among distinct subjects.
    fn oracle_rank(cos_row: &[f64], gallery_ids: &[u32], truth: u32) -> usize {
        let mut entries: Vec<(f64, bool, u32)> = cos_row
            .iter()
            .zip(gallery_ids)
            .map(|(&c, &id)| (c, id == truth, id))
            .collect();
        entries.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut seen: Vec<u32> = Vec::new();
        for (_, is_true, id) in entries {
            if is_true {
                return seen.len() + 1;
            }
            if !seen.contains(&id) {
                seen.push(id);
            }
        }
        unreachable!("truth present in gallery")
    }

    #[test]
    fn ranks_match_full_sort_oracle() {
        let mut rng = Rng::new(99);
        for _ in 0..50 {
            let subjects = 3 + rng.below(10);
            let gallery_n = subjects + rng.below(20);
            let dim = 2 + rng.below(4);
            // coarse coordinates make exact ties common
            let coarse = |rng: &mut Rng| (rng.normal() * 2.0).round();
            let g = Matrix::from_fn(gallery_n, dim, |_, _| coarse(&mut rng));
            let ids: Vec<u32> = (0..gallery_n).map(|i| if i < subjects { i as u32 } else { rng.below(subjects) as u32 }).collect();
            let p = Matrix::from_fn(20, dim, |_, _| coarse(&mut rng));
            let pids: Vec<u32> = (0..20).map(|_| rng.below(subjects) as u32).collect();

            let ranks = probe_ranks(&g, &ids, &p, &pids).unwrap();
            let cos = cosine_matrix(&p, &g.transpose()).unwrap();
            for (k, &r) in ranks.iter().enumerate() {
                assert_eq!(r, oracle_rank(cos.row(k), &ids, pids[k]));
            }
            let rates = rates_from_ranks(&ranks, subjects);
            assert_eq!(*rates.last().unwrap(), 1.0);
        }
    }

    proptest! {
        #[test]
        fn duplicating_a_gallery_entry_never_helps(
            seed in any::<u64>(),
            dup in 0usize..6,
        ) {
            let mut rng = Rng::new(seed);
            let g = Matrix::from_fn(6, 3, |_, _| rng.normal());
            let ids: Vec<u32> = vec![0, 1, 2, 3, 4, 5];
            let p = Matrix::from_fn(10, 3, |_, _| rng.normal());
            let pids: Vec<u32> = (0..10).map(|_| rng.below(6) as u32).collect();
            let base = cmc(&g, &ids, &p, &pids, 6).unwrap();

            let mut rows: Vec<Vec<f64>> = (0..6).map(|r| g.row(r).to_vec()).collect();
            rows.push(g.row(dup).to_vec());
            let g2 = Matrix::from_rows(&rows).unwrap();
            let mut same_id = ids.clone();
            same_id.push(dup as u32);
            prop_assert_eq!(cmc(&g2, &same_id, &p, &pids, 6).unwrap(), base.clone());

            // the copy filed under a new identity can only push true matches down
            let mut new_id = ids.clone();
            new_id.push(99);
            let after = cmc(&g2, &new_id, &p, &pids, 6).unwrap();
            for (a, b) in after.iter().zip(&base) {
                prop_assert!(a <= b);
            }
            for w in after.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }
    }
}
