//! Class histograms, skew metrics and synthetic non-IID dataset generation.
//!
//! Global class skew follows a deterministic half-normal-shaped profile over
//! the class index, parameterized so the imbalance ratio between the most
//! and least frequent class is exact. Client discrepancy is controlled by
//! mixing the global profile with per-client concentrated distributions and
//! calibrating the mixing coefficient against a target average distance.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DistributionError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("histogram has no samples")]
    EmptyHistogram,
    #[error("selection is empty")]
    EmptySelection,
    #[error("need at least 2 classes, got {0}")]
    BadClassCount(usize),
    #[error("imbalance ratio must be >= 1, got {0}")]
    BadRho(f64),
    #[error("probabilities must be non-negative and sum to 1, got sum {0}")]
    BadDistribution(f64),
    #[error("target average distance {target} exceeds the achievable maximum {max:.4}")]
    InfeasibleEmd { target: f64, max: f64 },
    #[error("dataset parse error: {0}")]
    Parse(String),
}

/// Integer per-class sample counts of one (virtual) client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    counts: Vec<u64>,
}

impl ClassHistogram {
    pub fn new(counts: Vec<u64>) -> Self {
        ClassHistogram { counts }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn class_count(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn to_distribution(&self) -> Result<ClassDistribution, DistributionError> {
        let total = self.total();
        if total == 0 {
            return Err(DistributionError::EmptyHistogram);
        }
        Ok(ClassDistribution {
            probs: self
                .counts
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect(),
        })
    }

    /// Most frequent count over least frequent; infinity when a class is empty.
    pub fn imbalance_ratio(&self) -> f64 {
        imbalance_ratio_of(self.counts.iter().map(|&c| c as f64))
    }
}

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, DistributionError> {
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DistributionError::BadDistribution(sum));
        }
        Ok(ClassDistribution { probs })
    }

    pub fn uniform(class_count: usize) -> Self {
        ClassDistribution {
            probs: vec![1.0 / class_count as f64; class_count],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }

    pub fn imbalance_ratio(&self) -> f64 {
        imbalance_ratio_of(self.probs.iter().copied())
    }
}

fn imbalance_ratio_of(values: impl Iterator<Item = f64>) -> f64 {
    let mut max = f64::MIN;
    let mut min = f64::MAX;
    for v in values {
        max = max.max(v);
        min = min.min(v);
    }
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// 1-norm distance between two distributions; ranges over [0, 2].
pub fn l1_distance(
    p: &ClassDistribution,
    q: &ClassDistribution,
) -> Result<f64, DistributionError> {
    if p.class_count() != q.class_count() {
        return Err(DistributionError::LengthMismatch(
            p.class_count(),
            q.class_count(),
        ));
    }
    Ok(p.probs
        .iter()
        .zip(&q.probs)
        .map(|(a, b)| (a - b).abs())
        .sum())
}

/// KL divergence `sum p ln(p/q)` with `0 ln 0 = 0`; infinite when q vanishes
/// where p does not.
pub fn kl_divergence(
    p: &ClassDistribution,
    q: &ClassDistribution,
) -> Result<f64, DistributionError> {
    if p.class_count() != q.class_count() {
        return Err(DistributionError::LengthMismatch(
            p.class_count(),
            q.class_count(),
        ));
    }
    let mut sum = 0.0;
    for (&pj, &qj) in p.probs.iter().zip(&q.probs) {
        if pj == 0.0 {
            continue;
        }
        if qj == 0.0 {
            return Ok(f64::INFINITY);
        }
        sum += pj * (pj / qj).ln();
    }
    Ok(sum)
}

/// Global class proportions with an exact most-to-least frequent ratio.
///
/// `q_j` is proportional to `exp(-alpha j^2)` with
/// `alpha = ln(rho) / (C-1)^2`, a half-normal-shaped density profile over
/// the class index that pins `q_0 / q_{C-1} = rho`.
pub fn generate_global_proportions(
    class_count: usize,
    rho: f64,
) -> Result<ClassDistribution, DistributionError> {
    if class_count < 2 {
        return Err(DistributionError::BadClassCount(class_count));
    }
    if !(rho >= 1.0) {
        return Err(DistributionError::BadRho(rho));
    }
    let alpha = rho.ln() / ((class_count - 1) as f64).powi(2);
    let weights: Vec<f64> = (0..class_count)
        .map(|j| (-alpha * (j as f64).powi(2)).exp())
        .collect();
    let sum: f64 = weights.iter().sum();
    Ok(ClassDistribution {
        probs: weights.into_iter().map(|w| w / sum).collect(),
    })
}

/// Largest-remainder (Hamilton) rounding of `probs * total` to integers
/// summing exactly to `total`; remainder ties go to the lower class index.
pub fn largest_remainder_round(probs: &[f64], total: u64) -> Vec<u64> {
    let mut counts: Vec<u64> = Vec::with_capacity(probs.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(probs.len());
    let mut assigned = 0u64;
    for (j, &p) in probs.iter().enumerate() {
        let exact = p.max(0.0) * total as f64;
        let floor = exact.floor() as u64;
        counts.push(floor);
        assigned += floor;
        remainders.push((j, exact - exact.floor()));
    }
    // Sort by remainder descending, index ascending on ties.
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut leftover = total.saturating_sub(assigned);
    for (j, _) in remainders {
        if leftover == 0 {
            break;
        }
        counts[j] += 1;
        leftover -= 1;
    }
    counts
}

/// Distribution of the data participating in one round: the normalized
/// element-wise sum of the selected clients' counts.
pub fn population_distribution(
    selected: &[&ClassHistogram],
) -> Result<ClassDistribution, DistributionError> {
    let first = selected.first().ok_or(DistributionError::EmptySelection)?;
    let classes = first.class_count();
    let mut sums = vec![0u64; classes];
    for h in selected {
        if h.class_count() != classes {
            return Err(DistributionError::LengthMismatch(classes, h.class_count()));
        }
        for (s, &c) in sums.iter_mut().zip(h.counts()) {
            *s += c;
        }
    }
    ClassHistogram::new(sums).to_distribution()
}

/// Shape of the per-client concentration component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConcentrationVariant {
    /// Each client concentrates on (up to) two classes, half mass each.
    TwoClass,
    /// Each client concentrates on a single class.
    OneClass,
}

impl ConcentrationVariant {
    fn slots_per_client(self) -> usize {
        match self {
            ConcentrationVariant::TwoClass => 2,
            ConcentrationVariant::OneClass => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ConcentrationVariant::TwoClass => "two-class",
            ConcentrationVariant::OneClass => "one-class",
        }
    }
}

/// A synthetic federation: equal-size virtual clients with controlled global
/// skew and controlled average local-to-global distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationDataset {
    pub class_count: usize,
    pub n_vc: u64,
    pub clients: Vec<ClassHistogram>,
    /// The target global profile the mixture was built around.
    pub global_profile: ClassDistribution,
    pub rho_target: f64,
    pub rho_realized: f64,
    pub emd_target: f64,
    pub emd_realized: f64,
    pub seed: u64,
    pub variant: ConcentrationVariant,
}

impl FederationDataset {
    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    /// Global distribution recomputed from the emitted integer counts.
    pub fn global_realized(&self) -> ClassDistribution {
        let refs: Vec<&ClassHistogram> = self.clients.iter().collect();
        population_distribution(&refs).expect("dataset has clients")
    }

    /// Mean over clients of the distance between the client distribution and
    /// the realized global distribution, both from integer counts.
    pub fn emd_avg_realized(&self) -> f64 {
        let global = self.global_realized();
        let sum: f64 = self
            .clients
            .iter()
            .map(|h| l1_distance(&h.to_distribution().unwrap(), &global).unwrap())
            .sum();
        sum / self.clients.len() as f64
    }

    /// Soft checks on the realized metrics; violations are reported, not fatal.
    pub fn validation_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        if (self.emd_realized - self.emd_target).abs() > 0.02 {
            warnings.push(format!(
                "realized EMD^avg {:.4} deviates from target {:.4} by more than 0.02",
                self.emd_realized, self.emd_target
            ));
        }
        let rel = (self.rho_realized - self.rho_target).abs() / self.rho_target;
        if rel > 0.05 {
            warnings.push(format!(
                "realized imbalance ratio {:.4} deviates from target {:.4} by more than 5% \
                 (quantization of {} samples per client)",
                self.rho_realized, self.rho_target, self.n_vc
            ));
        }
        warnings
    }

    /// Line-oriented text form: `#`-prefixed metadata header, then one client
    /// per line as `id count_0 .. count_{C-1}`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# dubhe-dataset v1\n");
        let _ = writeln!(out, "# classes = {}", self.class_count);
        let _ = writeln!(out, "# clients = {}", self.clients.len());
        let _ = writeln!(out, "# n_vc = {}", self.n_vc);
        let _ = writeln!(out, "# rho_target = {}", self.rho_target);
        let _ = writeln!(out, "# rho_realized = {}", self.rho_realized);
        let _ = writeln!(out, "# emd_target = {}", self.emd_target);
        let _ = writeln!(out, "# emd_realized = {}", self.emd_realized);
        let _ = writeln!(out, "# seed = {}", self.seed);
        let _ = writeln!(out, "# variant = {}", self.variant.as_str());
        for (id, client) in self.clients.iter().enumerate() {
            let _ = write!(out, "{id}");
            for c in client.counts() {
                let _ = write!(out, " {c}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DistributionError> {
        let bad = |msg: String| DistributionError::Parse(msg);
        let mut classes = None;
        let mut n_vc = None;
        let mut rho_target = None;
        let mut rho_realized = None;
        let mut emd_target = None;
        let mut emd_realized = None;
        let mut seed = None;
        let mut variant = ConcentrationVariant::TwoClass;
        let mut clients = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((key, value)) = rest.split_once('=') {
                    let key = key.trim();
                    let value = value.trim();
                    match key {
                        "classes" => classes = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                        "n_vc" => n_vc = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                        "rho_target" => rho_target = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                        "rho_realized" => rho_realized = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                        "emd_target" => emd_target = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                        "emd_realized" => emd_realized = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                        "seed" => seed = Some(value.parse().map_err(|e| bad(format!("{e}")))?),
                        "variant" => {
                            variant = match value {
                                "two-class" => ConcentrationVariant::TwoClass,
                                "one-class" => ConcentrationVariant::OneClass,
                                other => return Err(bad(format!("unknown variant {other}"))),
                            }
                        }
                        _ => {}
                    }
                }
                continue;
            }
            let mut fields = line.split_whitespace();
            let _id: usize = fields
                .next()
                .ok_or_else(|| bad(format!("line {}: missing id", lineno + 1)))?
                .parse()
                .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
            let counts: Vec<u64> = fields
                .map(|f| f.parse().map_err(|e| bad(format!("line {}: {e}", lineno + 1))))
                .collect::<Result<_, _>>()?;
            clients.push(ClassHistogram::new(counts));
        }
        let class_count: usize = classes.ok_or_else(|| bad("missing classes header".into()))?;
        if clients.iter().any(|c| c.class_count() != class_count) {
            return Err(bad("client row width does not match classes header".into()));
        }
        let rho_target = rho_target.ok_or_else(|| bad("missing rho_target header".into()))?;
        let global_profile = generate_global_proportions(class_count, rho_target)?;
        Ok(FederationDataset {
            class_count,
            n_vc: n_vc.ok_or_else(|| bad("missing n_vc header".into()))?,
            clients,
            global_profile,
            rho_target,
            rho_realized: rho_realized.ok_or_else(|| bad("missing rho_realized header".into()))?,
            emd_target: emd_target.ok_or_else(|| bad("missing emd_target header".into()))?,
            emd_realized: emd_realized.ok_or_else(|| bad("missing emd_realized header".into()))?,
            seed: seed.ok_or_else(|| bad("missing seed header".into()))?,
            variant,
        })
    }
}

/// Generates the per-client partitions of a federation.
///
/// Each client's distribution is `(1 - lambda) p_g + lambda d_k`. The
/// concentration components `d_k` are built from a quota of class slots
/// (largest-remainder of `p_g` over all slots, shuffled and dealt out), so
/// that the mass of the `d_k` pooled over all clients reproduces `p_g` and
/// the global skew survives any discrepancy level. `lambda` is found by
/// bisection so the mean distance `mean_k |p_k - p_g|_1` hits the target.
pub fn generate_client_partitions(
    global: &ClassDistribution,
    client_count: usize,
    n_vc: u64,
    target_emd_avg: f64,
    variant: ConcentrationVariant,
    rho_target: f64,
    seed: u64,
) -> Result<FederationDataset, DistributionError> {
    const BISECTION_TOLERANCE: f64 = 0.005;
    const BISECTION_MAX_ITERS: usize = 60;

    let classes = global.class_count();
    if classes < 2 {
        return Err(DistributionError::BadClassCount(classes));
    }
    if !(0.0..2.0).contains(&target_emd_avg) {
        return Err(DistributionError::InfeasibleEmd {
            target: target_emd_avg,
            max: 2.0,
        });
    }

    let mut rng = crate::seed::rng(seed, &[0x6461_7461]);
    let per_client = variant.slots_per_client();
    let slot_total = client_count * per_client;
    let slot_quota = largest_remainder_round(global.probs(), slot_total as u64);
    let mut slots: Vec<usize> = Vec::with_capacity(slot_total);
    for (class, &quota) in slot_quota.iter().enumerate() {
        slots.extend(std::iter::repeat(class).take(quota as usize));
    }
    slots.shuffle(&mut rng);

    let share = 1.0 / per_client as f64;
    let concentration: Vec<Vec<f64>> = slots
        .chunks(per_client)
        .map(|chunk| {
            let mut d = vec![0.0; classes];
            for &class in chunk {
                d[class] += share;
            }
            d
        })
        .collect();

    let mean_distance_at = |lambda: f64| -> f64 {
        let sum: f64 = concentration
            .iter()
            .map(|d| {
                d.iter()
                    .zip(global.probs())
                    .map(|(&dj, &gj)| (lambda * (dj - gj)).abs())
                    .sum::<f64>()
            })
            .sum();
        sum / client_count as f64
    };

    let max_distance = mean_distance_at(1.0);
    if target_emd_avg > max_distance + BISECTION_TOLERANCE {
        return Err(DistributionError::InfeasibleEmd {
            target: target_emd_avg,
            max: max_distance,
        });
    }

    let lambda = if target_emd_avg <= 0.0 {
        0.0
    } else if target_emd_avg >= max_distance {
        1.0
    } else {
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        let mut mid = 0.5;
        for _ in 0..BISECTION_MAX_ITERS {
            mid = 0.5 * (lo + hi);
            let value = mean_distance_at(mid);
            if (value - target_emd_avg).abs() <= BISECTION_TOLERANCE {
                break;
            }
            if value < target_emd_avg {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mid
    };

    let clients: Vec<ClassHistogram> = concentration
        .iter()
        .map(|d| {
            let probs: Vec<f64> = d
                .iter()
                .zip(global.probs())
                .map(|(&dj, &gj)| (1.0 - lambda) * gj + lambda * dj)
                .collect();
            ClassHistogram::new(largest_remainder_round(&probs, n_vc))
        })
        .collect();

    let mut dataset = FederationDataset {
        class_count: classes,
        n_vc,
        clients,
        global_profile: global.clone(),
        rho_target,
        rho_realized: 0.0,
        emd_target: target_emd_avg,
        emd_realized: 0.0,
        seed,
        variant,
    };
    dataset.rho_realized = dataset.global_realized().imbalance_ratio();
    dataset.emd_realized = dataset.emd_avg_realized();
    Ok(dataset)
}

/// Convenience wrapper: profile from `(C, rho)`, then partitions.
pub fn generate_federation(
    class_count: usize,
    client_count: usize,
    n_vc: u64,
    rho: f64,
    target_emd_avg: f64,
    variant: ConcentrationVariant,
    seed: u64,
) -> Result<FederationDataset, DistributionError> {
    let global = generate_global_proportions(class_count, rho)?;
    generate_client_partitions(
        &global,
        client_count,
        n_vc,
        target_emd_avg,
        variant,
        rho,
        seed,
    )
}
