//! Non-parametric hard-EM over patches, and the layer-wise network trainer.
//!
//! Each layer's bank starts from a single filter seeded at a training patch
//! and grows on demand: whenever a patch's best similarity falls below the
//! spawn threshold `alpha`, the patch founds a new filter centered on
//! itself. The E-step assigns every patch to its argmax filter; the M-step
//! recomputes each filter's mean and deviation from its assigned patches
//! and drops filters that lost all of theirs.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{FilterBank, GaussianFilter, SIGMA_FLOOR};
use crate::network::{shape_chain, Layer, LayerSpec, Network, Preprocessing, TrainMeta};
use crate::scalar::{real, Real};
use crate::tensor::{extract_patches, Tensor3};

/// Hard-EM hyperparameters for one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EmConfig {
    /// Spawn threshold in log-density units. `-inf` disables spawning.
    pub alpha: f64,
    pub max_iters: usize,
    /// Stop once fewer than this fraction of patches change assignment.
    pub convergence_frac: f64,
    /// Lower clamp for filter deviations.
    pub sigma_floor: f64,
    /// Deviation given to the seed filter and to freshly spawned filters.
    pub init_sigma: f64,
    /// Hard cap on the bank size; spawning stops silently at the cap.
    pub max_filters: usize,
    /// Patches drawn per image when collecting training patches
    /// (`0` = use all).
    pub patch_subsample: usize,
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            alpha: f64::NEG_INFINITY,
            max_iters: 20,
            convergence_frac: 1e-3,
            sigma_floor: SIGMA_FLOOR,
            init_sigma: 1.0,
            max_filters: 1000,
            patch_subsample: 0,
            seed: 0,
        }
    }
}

/// Per-patch E-step result: assigned filter index and its score.
#[derive(Debug, Clone)]
pub struct Assignment<T> {
    pub indices: Vec<usize>,
    pub scores: Vec<T>,
}

impl<T: Real> Assignment<T> {
    /// Sum of assigned scores, the hard-EM objective.
    pub fn objective(&self) -> f64 {
        // Sequential summation keeps the reported value independent of
        // thread count.
        self.scores.iter().map(|s| s.to_f64().unwrap()).sum()
    }
}

/// One training iteration as reported in the progress log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub bank_size: usize,
    pub objective: f64,
    pub changed_fraction: f64,
    pub spawned: usize,
}

/// Assign every patch to its best filter, spawning new filters for patches
/// whose best score falls below `cfg.alpha`.
///
/// Scoring against the pre-existing bank is fanned out across threads;
/// the spawn scan then runs in patch order, so patches later in the pass
/// can assign to (or be blocked from spawning by) filters spawned earlier
/// in the same pass. Returns the assignment and the number of spawns.
pub fn e_step<T: Real>(
    patches: &[Tensor3<T>],
    bank: &mut FilterBank<T>,
    cfg: &EmConfig,
) -> (Assignment<T>, usize) {
    assert!(!bank.is_empty(), "e_step requires a seeded bank");
    let alpha = real::<T>(cfg.alpha);
    let init_sigma = real::<T>(cfg.init_sigma);
    let base = bank.len();

    // Phase 1: best over the existing filters. Pure per patch, so the
    // parallel result is identical to a sequential scan.
    let snapshot = &*bank;
    let best: Vec<(usize, T)> = patches
        .par_iter()
        .map(|p| snapshot.best_filter(p).expect("non-empty bank"))
        .collect();

    // Phase 2: sequential spawn scan in patch order.
    let mut indices = Vec::with_capacity(patches.len());
    let mut scores = Vec::with_capacity(patches.len());
    let mut spawned = 0usize;
    for (patch, &(mut best_j, mut best_s)) in patches.iter().zip(best.iter()) {
        for j in base..bank.len() {
            let s = bank.filter(j).similarity(patch);
            if s > best_s {
                best_j = j;
                best_s = s;
            }
        }
        if best_s < alpha && bank.len() < cfg.max_filters {
            let filter = GaussianFilter::new(patch.clone(), init_sigma);
            let score = filter.similarity(patch);
            bank.push(filter);
            best_j = bank.len() - 1;
            best_s = score;
            spawned += 1;
        }
        indices.push(best_j);
        scores.push(best_s);
    }
    (Assignment { indices, scores }, spawned)
}

/// Re-estimate every filter from its assigned patches and drop filters with
/// no patches. Returns the old-index -> new-index map of survivors.
pub fn m_step<T: Real>(
    patches: &[Tensor3<T>],
    assignment: &Assignment<T>,
    bank: &mut FilterBank<T>,
    sigma_floor: f64,
) -> Vec<Option<usize>> {
    debug_assert_eq!(patches.len(), assignment.indices.len());
    let n_filters = bank.len();
    let (ph, pw, pc) = bank.patch_shape();
    let patch_len = ph * pw * pc;

    let mut counts = vec![0usize; n_filters];
    let mut sums = vec![T::zero(); n_filters * patch_len];
    for (patch, &j) in patches.iter().zip(&assignment.indices) {
        counts[j] += 1;
        let dst = &mut sums[j * patch_len..(j + 1) * patch_len];
        for (d, &s) in dst.iter_mut().zip(patch.as_slice()) {
            *d += s;
        }
    }

    // New means first; deviations need a second pass against them.
    let mut means: Vec<Option<Tensor3<T>>> = Vec::with_capacity(n_filters);
    for j in 0..n_filters {
        if counts[j] == 0 {
            means.push(None);
            continue;
        }
        let inv = T::one() / real::<T>(counts[j] as f64);
        let data = sums[j * patch_len..(j + 1) * patch_len]
            .iter()
            .map(|&s| s * inv)
            .collect();
        means.push(Some(Tensor3::from_vec(ph, pw, pc, data).expect("patch shape")));
    }

    let mut sq_dist = vec![T::zero(); n_filters];
    for (patch, &j) in patches.iter().zip(&assignment.indices) {
        let mu = means[j].as_ref().expect("assigned filter has a mean");
        sq_dist[j] += patch.squared_distance(mu);
    }

    let floor = real::<T>(sigma_floor);
    let mut old_to_new = vec![None; n_filters];
    let mut next = 0usize;
    for (j, slot) in old_to_new.iter_mut().enumerate() {
        if counts[j] > 0 {
            *slot = Some(next);
            next += 1;
        }
    }

    let mut new_bank = FilterBank::new(ph, pw, pc);
    for j in 0..n_filters {
        if counts[j] == 0 {
            continue;
        }
        let sigma = (sq_dist[j] / real::<T>(counts[j] as f64)).sqrt().max(floor);
        new_bank.push(GaussianFilter::new(means[j].take().unwrap(), sigma));
    }
    *bank = new_bank;
    old_to_new
}

/// Run hard-EM on a patch set until assignments settle or `max_iters` is
/// reached. Returns the trained bank and the per-iteration records.
pub fn train_layer<T: Real>(
    patches: &[Tensor3<T>],
    cfg: &EmConfig,
) -> Result<(FilterBank<T>, Vec<IterationRecord>)> {
    assert!(cfg.max_iters >= 1, "at least one EM iteration is required");
    assert!(cfg.max_filters >= 1, "the bank must be allowed at least one filter");
    if patches.is_empty() {
        return Err(Error::EmptyPatchSet);
    }
    let (ph, pw, pc) = patches[0].shape();
    debug_assert!(patches.iter().all(|p| p.shape() == (ph, pw, pc)));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let seed_patch = &patches[rng.gen_range(0..patches.len())];
    let mut bank = FilterBank::new(ph, pw, pc);
    bank.push(GaussianFilter::new(seed_patch.clone(), real::<T>(cfg.init_sigma)));

    let mut records = Vec::new();
    let mut prev_indices: Option<Vec<usize>> = None;
    for iteration in 1..=cfg.max_iters {
        let (assignment, spawned) = e_step(patches, &mut bank, cfg);
        let objective = assignment.objective();
        let changed_fraction = match &prev_indices {
            None => 1.0,
            Some(prev) => {
                let changed = prev
                    .iter()
                    .zip(&assignment.indices)
                    .filter(|(a, b)| a != b)
                    .count();
                changed as f64 / patches.len() as f64
            }
        };

        let old_to_new = m_step(patches, &assignment, &mut bank, cfg.sigma_floor);
        records.push(IterationRecord {
            iteration,
            bank_size: bank.len(),
            objective,
            changed_fraction,
            spawned,
        });
        log::info!(
            "em iter={iteration} bank={} objective={objective:.6} changed={changed_fraction:.6} spawned={spawned}",
            bank.len()
        );

        prev_indices = Some(
            assignment
                .indices
                .iter()
                .map(|&j| old_to_new[j].expect("assigned filters survive the M-step"))
                .collect(),
        );
        if iteration > 1 && changed_fraction < cfg.convergence_frac {
            break;
        }
    }
    Ok((bank, records))
}

/// Propose a spawn threshold: fit the single global filter (mean of all
/// patches, RMS deviation) and take the given percentile of its scores.
pub fn calibrate_alpha<T: Real>(patches: &[Tensor3<T>], percentile: f64) -> Result<f64> {
    if patches.is_empty() {
        return Err(Error::EmptyPatchSet);
    }
    let (ph, pw, pc) = patches[0].shape();
    let len = ph * pw * pc;
    let inv_n = T::one() / real::<T>(patches.len() as f64);

    let mut mean = vec![T::zero(); len];
    for p in patches {
        for (m, &x) in mean.iter_mut().zip(p.as_slice()) {
            *m += x * inv_n;
        }
    }
    let mu = Tensor3::from_vec(ph, pw, pc, mean).expect("patch shape");
    let mut msd = T::zero();
    for p in patches {
        msd += p.squared_distance(&mu) * inv_n;
    }
    let sigma = msd.sqrt().max(real::<T>(SIGMA_FLOOR));
    let filter = GaussianFilter::new(mu, sigma);

    let mut scores: Vec<f64> = patches
        .iter()
        .map(|p| filter.similarity(p).to_f64().unwrap())
        .collect();
    scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((percentile / 100.0) * (scores.len() - 1) as f64).floor() as usize;
    Ok(scores[idx.min(scores.len() - 1)])
}

/// How each layer's spawn threshold is chosen by the network trainer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    /// Use each layer's `EmConfig.alpha` as given.
    Fixed,
    /// Calibrate per layer from its own patches at this percentile,
    /// overriding `EmConfig.alpha`.
    Percentile(f64),
}

/// Per-layer training summary.
#[derive(Debug, Clone)]
pub struct LayerReport {
    pub layer: usize,
    pub filters: usize,
    pub patches: usize,
    /// The spawn threshold actually used (after any calibration).
    pub alpha: f64,
    pub records: Vec<IterationRecord>,
}

/// Collect (optionally subsampled) training patches from a set of feature
/// maps.
pub fn collect_patches<T: Real>(
    maps: &[Tensor3<T>],
    spec: LayerSpec,
    per_image: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Tensor3<T>>> {
    let mut out = Vec::new();
    for map in maps {
        let grid = extract_patches(map, spec.patch_h, spec.patch_w, spec.stride)?;
        let total = grid.patches.len();
        if per_image == 0 || per_image >= total {
            out.extend(grid.patches);
        } else {
            let mut chosen = sample_indices(rng, total, per_image).into_vec();
            chosen.sort_unstable();
            let mut patches = grid.patches;
            // Drain in ascending index order without shifting costs.
            for (taken, idx) in chosen.into_iter().enumerate() {
                patches.swap(taken, idx);
            }
            patches.truncate(per_image);
            out.extend(patches);
        }
    }
    Ok(out)
}

/// Train every layer in sequence: collect patches from the current feature
/// maps, run hard-EM, then push all maps through the new layer to feed the
/// next one. `cfgs` supplies one [`EmConfig`] per architecture entry.
pub fn train_network<T: Real>(
    images: &[Tensor3<T>],
    arch: &[LayerSpec],
    cfgs: &[EmConfig],
    preprocessing: Preprocessing<T>,
) -> Result<(Network<T>, Vec<LayerReport>)> {
    train_network_calibrated(images, arch, cfgs, AlphaChoice::Fixed, preprocessing)
}

/// [`train_network`] with a spawn-threshold policy. With
/// [`AlphaChoice::Percentile`] each layer's threshold is proposed from its
/// own patches by [`calibrate_alpha`] just before EM runs.
pub fn train_network_calibrated<T: Real>(
    images: &[Tensor3<T>],
    arch: &[LayerSpec],
    cfgs: &[EmConfig],
    alpha_choice: AlphaChoice,
    preprocessing: Preprocessing<T>,
) -> Result<(Network<T>, Vec<LayerReport>)> {
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfgs.len() != arch.len() {
        return Err(Error::Format(format!(
            "{} layer configs for {} layers",
            cfgs.len(),
            arch.len()
        )));
    }
    let (h, w, c) = images[0].shape();
    if images.iter().any(|im| im.shape() != (h, w, c)) {
        return Err(Error::NonUniformDataset);
    }
    shape_chain(h, w, arch)?;

    let mut maps: Vec<Tensor3<T>> = match &preprocessing {
        Preprocessing::None | Preprocessing::Normalize => images.to_vec(),
        Preprocessing::Zca(z) => images
            .iter()
            .map(|im| z.apply(im))
            .collect::<Result<Vec<_>>>()?,
    };

    let mut layers = Vec::with_capacity(arch.len());
    let mut reports = Vec::with_capacity(arch.len());
    let mut alphas = Vec::with_capacity(arch.len());
    for (k, (&spec, cfg)) in arch.iter().zip(cfgs).enumerate() {
        // Subsampling draws from a stream derived from the layer seed so it
        // does not interfere with the EM initialization draw.
        let mut subsample_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
        let patches = collect_patches(&maps, spec, cfg.patch_subsample, &mut subsample_rng)?;

        let mut cfg = cfg.clone();
        if let AlphaChoice::Percentile(p) = alpha_choice {
            cfg.alpha = calibrate_alpha(&patches, p)?;
        }
        log::info!(
            "layer {k}: {} training patches, alpha {:.4}",
            patches.len(),
            cfg.alpha
        );
        let (bank, records) = train_layer(&patches, &cfg)?;
        reports.push(LayerReport {
            layer: k,
            filters: bank.len(),
            patches: patches.len(),
            alpha: cfg.alpha,
            records,
        });
        alphas.push(cfg.alpha);
        drop(patches);

        let layer = Layer::new(spec, bank);
        maps = maps
            .par_iter()
            .map(|m| crate::network::forward_layer(m, layer.spec, &layer.bank))
            .collect::<Result<Vec<_>>>()?;
        layers.push(layer);
    }

    let meta = TrainMeta {
        alphas,
        seed: cfgs.first().map(|c| c.seed).unwrap_or(0),
        ..TrainMeta::default()
    };
    let net = Network::new((h, w, c), layers, preprocessing, meta)?;
    Ok((net, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_patch(v: f64) -> Tensor3<f64> {
        Tensor3::from_vec(1, 1, 1, vec![v]).unwrap()
    }

    fn cfg_no_spawn() -> EmConfig {
        EmConfig::default()
    }

    #[test]
    fn e_step_without_spawning_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let patches: Vec<Tensor3<f64>> = (0..500)
            .map(|_| {
                Tensor3::from_vec(2, 2, 1, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .unwrap()
            })
            .collect();
        let mut bank = FilterBank::new(2, 2, 1);
        for _ in 0..12 {
            let mean =
                Tensor3::from_vec(2, 2, 1, (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect())
                    .unwrap();
            bank.push(GaussianFilter::new(mean, rng.gen_range(0.2..1.5)));
        }
        let reference = bank.clone();
        let (assignment, spawned) = e_step(&patches, &mut bank, &cfg_no_spawn());
        assert_eq!(spawned, 0);
        assert_eq!(bank.len(), reference.len());
        for (patch, &j) in patches.iter().zip(&assignment.indices) {
            let scores: Vec<f64> = reference.filters().iter().map(|g| g.similarity(patch)).collect();
            let brute = scores
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(j, brute);
        }
    }

    #[test]
    fn distant_cluster_spawns_and_captures() {
        // Patches near 0 and near 100; bank holds one filter at 0. A score
        // at distance ~100 is about -5000.9, far below alpha = -10, so the
        // first far patch founds a filter and the rest join it.
        let mut patches: Vec<Tensor3<f64>> = Vec::new();
        for i in 0..20 {
            patches.push(scalar_patch(0.0 + (i as f64) * 0.01));
            patches.push(scalar_patch(100.0 + (i as f64) * 0.01));
        }
        let mut bank = FilterBank::new(1, 1, 1);
        bank.push(GaussianFilter::new(scalar_patch(0.0), 1.0));
        let cfg = EmConfig { alpha: -10.0, ..EmConfig::default() };
        let (assignment, spawned) = e_step(&patches, &mut bank, &cfg);
        assert_eq!(spawned, 1);
        for (patch, &j) in patches.iter().zip(&assignment.indices) {
            if patch.get(0, 0, 0) > 50.0 {
                assert_eq!(j, 1, "far patches belong to the spawned filter");
            } else {
                assert_eq!(j, 0);
            }
        }
    }

    #[test]
    fn spawning_respects_the_filter_cap() {
        // Alpha high enough that every isolated patch wants its own filter.
        let patches: Vec<Tensor3<f64>> = (0..50).map(|i| scalar_patch(i as f64 * 100.0)).collect();
        let mut bank = FilterBank::new(1, 1, 1);
        bank.push(GaussianFilter::new(scalar_patch(0.0), 1.0));
        let cfg = EmConfig { alpha: -2.0, max_filters: 5, ..EmConfig::default() };
        let (_, spawned) = e_step(&patches, &mut bank, &cfg);
        assert_eq!(bank.len(), 5);
        assert_eq!(spawned, 4);
    }

    #[test]
    fn m_step_two_point_example() {
        let patches = vec![scalar_patch(0.0), scalar_patch(2.0)];
        let mut bank = FilterBank::new(1, 1, 1);
        bank.push(GaussianFilter::new(scalar_patch(0.5), 1.0));
        let assignment = Assignment { indices: vec![0, 0], scores: vec![0.0, 0.0] };
        m_step(&patches, &assignment, &mut bank, SIGMA_FLOOR);
        assert_eq!(bank.filter(0).mean.get(0, 0, 0), 1.0);
        // sigma = sqrt((1 + 1) / 2) = 1
        assert!((bank.filter(0).sigma - 1.0).abs() < 1e-15);
    }

    #[test]
    fn m_step_singleton_clamps_sigma() {
        let patches = vec![scalar_patch(0.7)];
        let mut bank = FilterBank::new(1, 1, 1);
        bank.push(GaussianFilter::new(scalar_patch(0.0), 1.0));
        let assignment = Assignment { indices: vec![0], scores: vec![0.0] };
        m_step(&patches, &assignment, &mut bank, SIGMA_FLOOR);
        assert_eq!(bank.filter(0).mean.get(0, 0, 0), 0.7);
        assert_eq!(bank.filter(0).sigma, SIGMA_FLOOR);
    }

    #[test]
    fn m_step_identical_patches_clamp_sigma() {
        let patches = vec![scalar_patch(0.5); 8];
        let mut bank = FilterBank::new(1, 1, 1);
        bank.push(GaussianFilter::new(scalar_patch(0.5), 1.0));
        let assignment = Assignment { indices: vec![0; 8], scores: vec![0.0; 8] };
        m_step(&patches, &assignment, &mut bank, SIGMA_FLOOR);
        assert_eq!(bank.filter(0).mean.get(0, 0, 0), 0.5);
        assert_eq!(bank.filter(0).sigma, SIGMA_FLOOR);
    }

    #[test]
    fn m_step_removes_empty_filters_and_remaps() {
        let patches = vec![scalar_patch(0.0), scalar_patch(10.0)];
        let mut bank = FilterBank::new(1, 1, 1);
        bank.push(GaussianFilter::new(scalar_patch(0.0), 1.0));
        bank.push(GaussianFilter::new(scalar_patch(5.0), 1.0)); // gets nothing
        bank.push(GaussianFilter::new(scalar_patch(10.0), 1.0));
        let assignment = Assignment { indices: vec![0, 2], scores: vec![0.0, 0.0] };
        let map = m_step(&patches, &assignment, &mut bank, SIGMA_FLOOR);
        assert_eq!(bank.len(), 2);
        assert_eq!(map, vec![Some(0), None, Some(1)]);
        assert_eq!(bank.filter(1).mean.get(0, 0, 0), 10.0);
    }

    #[test]
    fn no_spawning_converges_to_the_global_filter() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let patches: Vec<Tensor3<f64>> =
            (0..200).map(|_| scalar_patch(rng.gen_range(-2.0..2.0))).collect();
        let cfg = EmConfig { max_iters: 50, seed: 4, ..EmConfig::default() };
        let (bank, _) = train_layer(&patches, &cfg).unwrap();
        assert_eq!(bank.len(), 1);

        let mean: f64 = patches.iter().map(|p| p.get(0, 0, 0)).sum::<f64>() / 200.0;
        let rms: f64 = (patches
            .iter()
            .map(|p| (p.get(0, 0, 0) - mean).powi(2))
            .sum::<f64>()
            / 200.0)
            .sqrt();
        assert!((bank.filter(0).mean.get(0, 0, 0) - mean).abs() < 1e-12);
        assert!((bank.filter(0).sigma - rms).abs() < 1e-12);
    }

    #[test]
    fn three_separated_clusters_are_recovered() {
        let centers = [0.0, 50.0, 100.0];
        let mut successes = 0;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let mut patches = Vec::new();
            let mut true_means = [0.0f64; 3];
            for (ci, &center) in centers.iter().enumerate() {
                let mut sum = 0.0;
                for _ in 0..60 {
                    let v = center + rng.gen_range(-0.5..0.5);
                    sum += v;
                    patches.push(scalar_patch(v));
                }
                true_means[ci] = sum / 60.0;
            }
            let cfg = EmConfig { alpha: -20.0, seed, ..EmConfig::default() };
            let (bank, _) = train_layer(&patches, &cfg).unwrap();
            if bank.len() != 3 {
                continue;
            }
            let mut found = [false; 3];
            for g in bank.filters() {
                let m = g.mean.get(0, 0, 0);
                for (ci, &center) in centers.iter().enumerate() {
                    if (m - center).abs() < 5.0 {
                        found[ci] = (m - true_means[ci]).abs() < 0.2;
                    }
                }
            }
            if found.iter().all(|&f| f) {
                successes += 1;
            }
        }
        assert!(successes >= 19, "only {successes}/20 seeds recovered the clusters");
    }

    #[test]
    fn objective_ascends_once_spawning_ceases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let patches: Vec<Tensor3<f64>> = (0..300)
            .map(|_| {
                Tensor3::from_vec(2, 2, 1, (0..4).map(|_| rng.gen_range(0.0..1.0)).collect())
                    .unwrap()
            })
            .collect();
        // Multi-filter regime without spawning: seed a bank and iterate the
        // two steps by hand.
        let mut bank = FilterBank::new(2, 2, 1);
        for i in 0..6 {
            bank.push(GaussianFilter::new(patches[i * 37].clone(), 1.0));
        }
        let cfg = cfg_no_spawn();
        let mut last: Option<f64> = None;
        for _ in 0..20 {
            let (assignment, spawned) = e_step(&patches, &mut bank, &cfg);
            assert_eq!(spawned, 0);
            let objective = assignment.objective();
            if let Some(prev) = last {
                assert!(
                    objective >= prev - 1e-9 * prev.abs(),
                    "objective regressed: {prev} -> {objective}"
                );
            }
            last = Some(objective);
            m_step(&patches, &assignment, &mut bank, SIGMA_FLOOR);
        }
    }

    #[test]
    fn training_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let patches: Vec<Tensor3<f64>> = (0..150)
            .map(|_| scalar_patch(rng.gen_range(0.0..1.0) * 40.0))
            .collect();
        let cfg = EmConfig { alpha: -6.0, seed: 13, ..EmConfig::default() };
        let (a, _) = train_layer(&patches, &cfg).unwrap();
        let (b, _) = train_layer(&patches, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn raising_alpha_never_spawns_fewer_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let patches: Vec<Tensor3<f64>> = (0..250)
            .map(|_| scalar_patch(rng.gen_range(0.0..1.0) * 30.0))
            .collect();
        let seed_bank = {
            let mut b = FilterBank::new(1, 1, 1);
            b.push(GaussianFilter::new(patches[0].clone(), 1.0));
            b
        };
        let mut last = 0usize;
        for alpha in [-400.0, -200.0, -100.0, -50.0, -25.0, -10.0, -5.0, -1.5] {
            let mut bank = seed_bank.clone();
            let cfg = EmConfig { alpha, ..EmConfig::default() };
            let (_, spawned) = e_step(&patches, &mut bank, &cfg);
            assert!(
                spawned >= last,
                "alpha {alpha}: spawned {spawned} < previous {last}"
            );
            last = spawned;
        }
    }

    #[test]
    fn bank_never_exceeds_max_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let patches: Vec<Tensor3<f64>> = (0..400)
            .map(|_| scalar_patch(rng.gen_range(0.0..1.0) * 1000.0))
            .collect();
        let cfg = EmConfig { alpha: -1.0, max_filters: 17, seed: 0, ..EmConfig::default() };
        let (bank, records) = train_layer(&patches, &cfg).unwrap();
        assert!(bank.len() <= 17);
        assert!(records.iter().all(|r| r.bank_size <= 17));
    }

    #[test]
    fn calibrated_alpha_sits_at_the_requested_percentile() {
        let patches: Vec<Tensor3<f64>> = (0..100).map(|i| scalar_patch(i as f64)).collect();
        let alpha = calibrate_alpha(&patches, 2.0).unwrap();
        // Replay the single global filter and count how many scores fall
        // below the proposed threshold: at most the requested 2%.
        let mean = 49.5;
        let rms = (patches
            .iter()
            .map(|p| (p.get(0, 0, 0) - mean).powi(2))
            .sum::<f64>()
            / 100.0)
            .sqrt();
        let g = GaussianFilter::new(scalar_patch(mean), rms);
        let count_below = patches.iter().filter(|p| g.similarity(p) < alpha).count();
        assert!(count_below <= 2, "{count_below} scores below the 2% threshold");
        assert!(alpha.is_finite());
    }

    #[test]
    fn collect_patches_subsamples_per_image() {
        let maps = vec![Tensor3::<f64>::zeros(10, 10, 1); 3];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let spec = LayerSpec::new(2, 2, 2); // 5x5 = 25 windows per image
        let all = collect_patches(&maps, spec, 0, &mut rng).unwrap();
        assert_eq!(all.len(), 75);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let some = collect_patches(&maps, spec, 7, &mut rng).unwrap();
        assert_eq!(some.len(), 21);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let capped = collect_patches(&maps, spec, 999, &mut rng).unwrap();
        assert_eq!(capped.len(), 75);
    }
}
