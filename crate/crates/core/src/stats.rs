//! Log-binned flight histograms, tail-exponent fits and predicted exponents.
//!
//! For a boundary of dimension `d` in `R^{d_e}` the survival function of the
//! flight length behaves like `P(X > r) ~ r^(d_e - d - 2)`. The displacement
//! density `θ(r) = -dP/dr` then decays with exponent `β = d - d_e + 3` and the
//! step-count density `ψ(n)` with `α = (d - d_e + 4) / 2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flights::FlightRecord;
use crate::geometry::SideLabel;
use crate::rng;

/// Ordinary least squares `y = intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ols {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub n: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<Ols> {
    let n = x.len();
    if n != y.len() {
        return Err(Error::Usage("ols: x and y differ in length".into()));
    }
    if n < 2 {
        return Err(Error::InsufficientData(format!("ols needs 2 points, got {n}")));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::InsufficientData("ols: all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let sse: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| (b - intercept - slope * a).powi(2))
            .sum();
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(Ols {
        slope,
        intercept,
        stderr,
        n,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistKind {
    PsiN,
    ThetaR,
    Survival,
}

/// Geometric binning `edge_i = base · 2^(i / bins_per_octave)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Binning {
    pub base: f64,
    pub bins_per_octave: u32,
    /// Octaves covered below and above `base`.
    pub octaves: u32,
}

impl Default for Binning {
    fn default() -> Self {
        Self {
            base: 1.0,
            bins_per_octave: 8,
            octaves: 48,
        }
    }
}

impl Binning {
    fn n_bins(&self) -> usize {
        (2 * self.octaves * self.bins_per_octave) as usize
    }

    fn lo_index(&self) -> i64 {
        -((self.octaves * self.bins_per_octave) as i64)
    }

    pub fn edge(&self, i: usize) -> f64 {
        let k = self.lo_index() + i as i64;
        self.base * 2f64.powf(k as f64 / self.bins_per_octave as f64)
    }

    /// Bin of `v`, or `Err(true)` for underflow / `Err(false)` for overflow.
    fn locate(&self, v: f64) -> std::result::Result<usize, bool> {
        if !(v >= self.edge(0)) {
            return Err(true);
        }
        let n = self.n_bins();
        if v >= self.edge(n) {
            return Err(false);
        }
        let guess = ((v / self.base).log2() * self.bins_per_octave as f64).floor() as i64
            - self.lo_index();
        let mut i = guess.clamp(0, n as i64 - 1) as usize;
        while i > 0 && v < self.edge(i) {
            i -= 1;
        }
        while i + 1 < n && v >= self.edge(i + 1) {
            i += 1;
        }
        Ok(i)
    }
}

/// Streaming log-binned histogram; counts plus under/overflow sum to `total`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailHistogram {
    pub kind: HistKind,
    pub binning: Binning,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
    pub total: u64,
}

impl TailHistogram {
    pub fn new(kind: HistKind, binning: Binning) -> Self {
        Self {
            kind,
            binning,
            counts: vec![0; binning.n_bins()],
            underflow: 0,
            overflow: 0,
            total: 0,
        }
    }

    pub fn add(&mut self, v: f64) {
        match self.binning.locate(v) {
            Ok(i) => self.counts[i] += 1,
            Err(true) => self.underflow += 1,
            Err(false) => self.overflow += 1,
        }
        self.total += 1;
    }

    pub fn merge(&mut self, other: &TailHistogram) -> Result<()> {
        if self.kind != other.kind || self.binning != other.binning {
            return Err(Error::Usage("cannot merge histograms with different binning".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.underflow += other.underflow;
        self.overflow += other.overflow;
        self.total += other.total;
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        (0..=self.counts.len()).map(|i| self.binning.edge(i)).collect()
    }

    /// `P(X >= edge_i)` for every edge, normalized by the records inside the binned range.
    pub fn ccdf(&self) -> Vec<f64> {
        let support = (self.total - self.underflow) as f64;
        let mut tail = self.overflow;
        let mut out = vec![0.0; self.counts.len() + 1];
        out[self.counts.len()] = tail as f64 / support;
        for i in (0..self.counts.len()).rev() {
            tail += self.counts[i];
            out[i] = tail as f64 / support;
        }
        out
    }

    /// Count per unit length, normalized by `total`.
    pub fn density(&self) -> Vec<f64> {
        let e = self.edges();
        self.counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 / ((e[i + 1] - e[i]) * self.total as f64))
            .collect()
    }

    /// `bin_lo,bin_hi,count,density,ccdf` rows over the occupied range.
    pub fn to_csv(&self) -> String {
        let e = self.edges();
        let dens = self.density();
        let cc = self.ccdf();
        let mut s = String::from("bin_lo,bin_hi,count,density,ccdf\n");
        let first = self.counts.iter().position(|&c| c > 0);
        let last = self.counts.iter().rposition(|&c| c > 0);
        if let (Some(a), Some(b)) = (first, last) {
            for i in a..=b {
                s.push_str(&format!(
                    "{},{},{},{},{}\n",
                    e[i], e[i + 1], self.counts[i], dens[i], cc[i]
                ));
            }
        }
        s
    }
}

/// Which flights enter the histograms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordFilter {
    /// Keep only flights whose start and end sides agree (ambiguous labels dropped).
    pub same_side: bool,
}

impl Default for RecordFilter {
    fn default() -> Self {
        Self { same_side: true }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterTally {
    pub seen: u64,
    pub censored: u64,
    pub ambiguous: u64,
    pub side_mismatch: u64,
    pub used: u64,
}

impl FilterTally {
    pub fn censoring_fraction(&self) -> f64 {
        if self.seen == 0 {
            0.0
        } else {
            self.censored as f64 / self.seen as f64
        }
    }
}

/// ψ(n), θ(r) and survival histograms built from a stream of flights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accumulator {
    pub filter: RecordFilter,
    pub psi: TailHistogram,
    pub theta: TailHistogram,
    pub survival: TailHistogram,
    pub tally: FilterTally,
}

impl Accumulator {
    pub fn new(filter: RecordFilter, binning: Binning) -> Self {
        Self {
            filter,
            psi: TailHistogram::new(HistKind::PsiN, binning),
            theta: TailHistogram::new(HistKind::ThetaR, binning),
            survival: TailHistogram::new(HistKind::Survival, binning),
            tally: FilterTally::default(),
        }
    }

    pub fn push(&mut self, rec: &FlightRecord) {
        self.tally.seen += 1;
        if rec.censored {
            self.tally.censored += 1;
            return;
        }
        if self.filter.same_side {
            if rec.start_side == SideLabel::Ambiguous || rec.end_side == SideLabel::Ambiguous {
                self.tally.ambiguous += 1;
                return;
            }
            if rec.start_side != rec.end_side {
                self.tally.side_mismatch += 1;
                return;
            }
        }
        self.tally.used += 1;
        self.psi.add(rec.n);
        self.theta.add(rec.r);
        self.survival.add(rec.r);
    }

    pub fn merge(&mut self, other: &Accumulator) -> Result<()> {
        self.psi.merge(&other.psi)?;
        self.theta.merge(&other.theta)?;
        self.survival.merge(&other.survival)?;
        self.tally.seen += other.tally.seen;
        self.tally.censored += other.tally.censored;
        self.tally.ambiguous += other.tally.ambiguous;
        self.tally.side_mismatch += other.tally.side_mismatch;
        self.tally.used += other.tally.used;
        Ok(())
    }
}

/// Histograms from a finite set of records; fails when nothing survives the filter.
pub fn accumulate<'a>(
    records: impl IntoIterator<Item = &'a FlightRecord>,
    filter: RecordFilter,
    binning: Binning,
) -> Result<Accumulator> {
    let mut acc = Accumulator::new(filter, binning);
    for r in records {
        acc.push(r);
    }
    if acc.tally.used == 0 {
        return Err(Error::InsufficientData(format!(
            "no flights survive the filter ({:?})",
            acc.tally
        )));
    }
    Ok(acc)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    CcdfOls,
    DensityOls,
}

pub const MIN_FIT_BINS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub kind: HistKind,
    /// Exponent of the density (θ or ψ): `-β` or `-α` when the law holds.
    pub exponent: f64,
    /// Slope of `log P(X > x)` against `log x` (ccdf estimator only).
    pub ccdf_slope: Option<f64>,
    pub stderr: f64,
    /// Intercept of the regression line, in natural logs.
    pub intercept: f64,
    pub window: (f64, f64),
    pub estimator: Estimator,
    /// Records with values inside the window.
    pub n_used: u64,
    pub n_points: usize,
}

/// Fits the tail of `hist` over `window = (lo, hi)`.
///
/// The ccdf estimator regresses `log P(X >= e)` on `log e` at every bin edge
/// inside the window and reports `slope - 1` as the density exponent. The
/// density estimator regresses the log-binned density at geometric bin centres.
pub fn fit_tail(hist: &TailHistogram, window: (f64, f64), estimator: Estimator) -> Result<TailFit> {
    let (lo, hi) = window;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Usage(format!("bad fit window {window:?}")));
    }
    let edges = hist.edges();
    let inside: Vec<usize> = (0..hist.counts.len())
        .filter(|&i| edges[i] >= lo && edges[i + 1] <= hi)
        .collect();
    let nonempty = inside.iter().filter(|&&i| hist.counts[i] > 0).count();
    if nonempty < MIN_FIT_BINS {
        return Err(Error::InsufficientData(format!(
            "{nonempty} nonempty bins in window {window:?}, need {MIN_FIT_BINS}"
        )));
    }
    let n_used = inside.iter().map(|&i| hist.counts[i]).sum();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    match estimator {
        Estimator::CcdfOls => {
            let cc = hist.ccdf();
            for (i, &e) in edges.iter().enumerate() {
                if e >= lo && e <= hi && cc[i] > 0.0 {
                    xs.push(e.ln());
                    ys.push(cc[i].ln());
                }
            }
        }
        Estimator::DensityOls => {
            let dens = hist.density();
            for &i in &inside {
                if hist.counts[i] > 0 {
                    xs.push((edges[i] * edges[i + 1]).sqrt().ln());
                    ys.push(dens[i].ln());
                }
            }
        }
    }
    let fit = ols(&xs, &ys)?;
    let (exponent, ccdf_slope) = match estimator {
        Estimator::CcdfOls => (fit.slope - 1.0, Some(fit.slope)),
        Estimator::DensityOls => (fit.slope, None),
    };
    Ok(TailFit {
        kind: hist.kind,
        exponent,
        ccdf_slope,
        stderr: fit.stderr,
        intercept: fit.intercept,
        window,
        estimator,
        n_used,
        n_points: xs.len(),
    })
}

/// Bootstrap spread of a tail fit: resamples `values` with replacement.
///
/// Returns the mean and standard deviation of the fitted exponent over
/// `resamples` replicates.
pub fn bootstrap_tail_fit(
    values: &[f64],
    kind: HistKind,
    binning: Binning,
    window: (f64, f64),
    estimator: Estimator,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if values.is_empty() || resamples < 2 {
        return Err(Error::InsufficientData("bootstrap needs data and >= 2 resamples".into()));
    }
    let mut rng = rng::seeded(seed);
    let mut exps = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut h = TailHistogram::new(kind, binning);
        for _ in 0..values.len() {
            h.add(values[rng.random_range(0..values.len())]);
        }
        exps.push(fit_tail(&h, window, estimator)?.exponent);
    }
    let m = exps.iter().sum::<f64>() / exps.len() as f64;
    let var = exps.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (exps.len() - 1) as f64;
    Ok((m, var.sqrt()))
}

/// Exponents predicted for a boundary of dimension `d` in `R^{d_e}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailPrediction {
    pub d: f64,
    pub d_e: u32,
    pub alpha: f64,
    pub beta: f64,
    pub survival_exponent: f64,
}

pub fn predict(d: f64, d_e: u32) -> Result<TailPrediction> {
    if !(d >= 0.0 && d <= d_e as f64) {
        return Err(Error::Domain(format!("dimension {d} outside [0, {d_e}]")));
    }
    let de = d_e as f64;
    Ok(TailPrediction {
        d,
        d_e,
        alpha: (d - de + 4.0) / 2.0,
        beta: d - de + 3.0,
        survival_exponent: de - d - 2.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// ψ(n) ~ n^-α
    Alpha,
    /// θ(r) ~ r^-β
    Beta,
    /// P(X > r) ~ r^(d_e - d - 2)
    Survival,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub target: Target,
    pub fitted_slope: f64,
    pub expected_slope: f64,
    pub stderr: f64,
    pub tolerance: f64,
    pub deviation: f64,
    pub pass: bool,
}

/// Passes when `|fitted - expected| <= tolerance + 2·stderr`, both as log-log slopes.
pub fn compare(fit: &TailFit, pred: &TailPrediction, target: Target, tolerance: f64) -> Result<Verdict> {
    let (fitted, expected) = match target {
        Target::Alpha => {
            if fit.kind != HistKind::PsiN {
                return Err(Error::Usage("α is compared against a ψ(n) fit".into()));
            }
            (fit.exponent, -pred.alpha)
        }
        Target::Beta | Target::Survival => {
            if fit.kind == HistKind::PsiN {
                return Err(Error::Usage(format!("{target:?} is compared against an r fit")));
            }
            if target == Target::Beta {
                (fit.exponent, -pred.beta)
            } else {
                (fit.ccdf_slope.unwrap_or(fit.exponent + 1.0), pred.survival_exponent)
            }
        }
    };
    let deviation = (fitted - expected).abs();
    Ok(Verdict {
        target,
        fitted_slope: fitted,
        expected_slope: expected,
        stderr: fit.stderr,
        tolerance,
        deviation,
        pass: deviation <= tolerance + 2.0 * fit.stderr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use proptest::prelude::*;
    use rand::Rng;

    fn rec(n: f64, r: f64) -> FlightRecord {
        FlightRecord {
            start: Point::new2(0.0, 1.0),
            end: Point::new2(r, 0.0),
            n,
            r,
            start_side: SideLabel::Left,
            end_side: SideLabel::Left,
            censored: false,
        }
    }

    #[test]
    fn ols_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = ols(&x, &y).unwrap();
        assert_eq!(f.slope, 2.0);
        assert_eq!(f.intercept, 1.0);
        assert_eq!(f.stderr, 0.0);
    }

    #[test]
    fn single_record_fills_one_bin_each() {
        let acc = accumulate([&rec(5.0, 3.0)], RecordFilter::default(), Binning::default()).unwrap();
        for h in [&acc.psi, &acc.theta, &acc.survival] {
            assert_eq!(h.counts.iter().filter(|&&c| c > 0).count(), 1);
            assert_eq!(h.total, 1);
        }
    }

    #[test]
    fn survival_starts_at_one_and_never_increases() {
        let recs: Vec<FlightRecord> = (1..500).map(|i| rec(i as f64, (i as f64).sqrt())).collect();
        let acc = accumulate(&recs, RecordFilter::default(), Binning::default()).unwrap();
        let cc = acc.survival.ccdf();
        assert_eq!(cc[0], 1.0);
        assert!(cc.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn filter_drops_censored_and_cross_side_flights() {
        let mut a = rec(3.0, 2.0);
        a.censored = true;
        let mut b = rec(3.0, 2.0);
        b.end_side = SideLabel::Right;
        let mut c = rec(3.0, 2.0);
        c.start_side = SideLabel::Ambiguous;
        let d = rec(3.0, 2.0);
        let acc = accumulate([&a, &b, &c, &d], RecordFilter::default(), Binning::default()).unwrap();
        assert_eq!(
            acc.tally,
            FilterTally {
                seen: 4,
                censored: 1,
                ambiguous: 1,
                side_mismatch: 1,
                used: 1
            }
        );
        assert!(matches!(
            accumulate([&a], RecordFilter::default(), Binning::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    /// Octave bins holding 2^(K-1-i) records, plus one overflow record:
    /// the ccdf at edge 2^i is exactly 2^-i.
    fn exact_inverse_power_histogram() -> TailHistogram {
        let binning = Binning {
            base: 1.0,
            bins_per_octave: 1,
            octaves: 12,
        };
        let mut h = TailHistogram::new(HistKind::Survival, binning);
        let k = 10;
        for i in 0..k {
            let v = 2f64.powi(i) * 1.5;
            for _ in 0..(1u64 << (k - 1 - i)) {
                h.add(v);
            }
        }
        h.add(1e9);
        h
    }

    #[test]
    fn exact_power_law_survival_gives_exponent_minus_two() {
        let h = exact_inverse_power_histogram();
        let f = fit_tail(&h, (1.0, 512.0), Estimator::CcdfOls).unwrap();
        assert!((f.ccdf_slope.unwrap() + 1.0).abs() < 1e-12);
        assert!((f.exponent + 2.0).abs() < 1e-12);
        assert!(f.stderr < 1e-12);
    }

    #[test]
    fn too_few_bins_is_insufficient_data() {
        let h = exact_inverse_power_histogram();
        assert!(matches!(
            fit_tail(&h, (1.0, 16.0), Estimator::CcdfOls),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn predictions() {
        let p = predict(4.0 / 3.0, 2).unwrap();
        assert!((p.alpha - 10.0 / 6.0).abs() < 1e-15);
        assert!((p.beta - 7.0 / 3.0).abs() < 1e-15);
        let line = predict(1.0, 2).unwrap();
        assert_eq!(line.survival_exponent, -1.0);
        assert_eq!(line.beta, 2.0);
        assert_eq!(predict(2.0, 3).unwrap().survival_exponent, -1.0);
        assert!(matches!(predict(2.5, 2), Err(Error::Domain(_))));
        assert!(matches!(predict(-0.1, 3), Err(Error::Domain(_))));
    }

    fn theta_fit(exponent: f64, stderr: f64) -> TailFit {
        TailFit {
            kind: HistKind::ThetaR,
            exponent,
            ccdf_slope: Some(exponent + 1.0),
            stderr,
            intercept: 0.0,
            window: (10.0, 100.0),
            estimator: Estimator::CcdfOls,
            n_used: 1000,
            n_points: 20,
        }
    }

    #[test]
    fn compare_verdicts() {
        let saw = predict(4.0 / 3.0, 2).unwrap();
        assert!(compare(&theta_fit(-2.33, 0.04), &saw, Target::Beta, 0.1).unwrap().pass);
        assert!(!compare(&theta_fit(-2.0, 0.0), &saw, Target::Beta, 0.1).unwrap().pass);
        let line = predict(1.0, 2).unwrap();
        let v = compare(&theta_fit(-2.0, 0.0), &line, Target::Survival, 0.05).unwrap();
        assert!(v.pass);
        assert_eq!(v.expected_slope, -1.0);
        assert!(matches!(
            compare(&theta_fit(-2.0, 0.0), &line, Target::Alpha, 0.1),
            Err(Error::Usage(_))
        ));
    }

    proptest! {
        #[test]
        fn prediction_identities(d in 0.0f64..3.0, de in 2u32..=3) {
            prop_assume!(d <= de as f64);
            let p = predict(d, de).unwrap();
            prop_assert!((p.beta - (1.0 - p.survival_exponent)).abs() < 1e-12);
            prop_assert!((p.alpha - (p.beta + 1.0) / 2.0).abs() < 1e-12);
        }

        #[test]
        fn histogram_counts_sum_to_total(vals in proptest::collection::vec(0.0f64..1e6, 1..300)) {
            let mut h = TailHistogram::new(HistKind::ThetaR, Binning::default());
            for v in &vals { h.add(*v); }
            prop_assert_eq!(h.counts.iter().sum::<u64>() + h.underflow + h.overflow, h.total);
            let e = h.edges();
            prop_assert!(e.windows(2).all(|w| w[1] > w[0]));
        }

        #[test]
        fn fit_is_invariant_under_aligned_rescaling(seed in 0u64..50, shift in 1i32..4) {
            let mut rng = rng::seeded(seed);
            let vals: Vec<f64> = (0..4000).map(|_| 1.0 / (1.0 - rng.random::<f64>())).collect();
            let scale = 2f64.powi(shift);
            let mut a = TailHistogram::new(HistKind::ThetaR, Binning::default());
            let mut b = TailHistogram::new(HistKind::ThetaR, Binning { base: scale, ..Binning::default() });
            for v in &vals { a.add(*v); b.add(v * scale); }
            prop_assert_eq!(&a.counts, &b.counts);
            let fa = fit_tail(&a, (1.0, 64.0), Estimator::CcdfOls).unwrap();
            let fb = fit_tail(&b, (scale, 64.0 * scale), Estimator::CcdfOls).unwrap();
            prop_assert!((fa.exponent - fb.exponent).abs() < 1e-12);
        }
    }
}
