//! Spaces, parameters, and the options-with-failure policy triple.
//!
//! A hierarchical policy is a triple of conditional distributions:
//!
//! - `pi_hi(o | s)` — high level policy choosing the next option,
//! - `pi_lo(a | s, o)` — low level policy choosing the action,
//! - `pi_b(b | s, o_prev)` — termination policy for the previous option.
//!
//! The *options with failure* variant additionally resamples the option
//! uniformly with probability `zeta` when the previous option does not
//! terminate. The combination of `pi_hi` and the failure mechanism is
//! `bar_pi_hi(o | s, o_prev, b)`:
//!
//! - `b = 1`: `pi_hi(o | s)`,
//! - `b = 0`, `o == o_prev`: `1 - zeta + zeta / |O|`,
//! - `b = 0`, `o != o_prev`: `zeta / |O|`.
//!
//! Two parameterizations are supported. `Tabular` stores one full conditional
//! table per policy, with entries floored so every probability stays strictly
//! positive and logarithms stay finite. `TargetSeeking` is a three-scalar
//! family on a four-state line world: the high level policy steers towards
//! the left or right end state, the low level policy follows the option's
//! direction, and the option terminates with high probability at its target
//! end state. States are numbered `0..4` from left to right; options
//! `LEFTEND = 0`, `RIGHTEND = 1`; actions `LEFT = 0`, `RIGHT = 1`.

use rand::Rng;

use crate::error::{Error, Result};

/// Floor mixed into every tabular conditional slice so that all entries stay
/// strictly positive (keeps every `log pi` finite).
pub const TABULAR_FLOOR: f64 = 1e-6;

/// Box constraint for each scalar of the target-seeking family.
pub const SCALAR_BOX: (f64, f64) = (0.1, 0.9);

/// Option steering towards the left end state (target-seeking family).
pub const LEFTEND: usize = 0;
/// Option steering towards the right end state (target-seeking family).
pub const RIGHTEND: usize = 1;
/// Action moving left (target-seeking family).
pub const LEFT: usize = 0;
/// Action moving right (target-seeking family).
pub const RIGHT: usize = 1;

/// Cardinalities of the finite state, action and option spaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spaces {
    pub n_states: usize,
    pub n_actions: usize,
    pub n_options: usize,
}

impl Spaces {
    pub fn new(n_states: usize, n_actions: usize, n_options: usize) -> Result<Self> {
        if n_states == 0 || n_actions == 0 || n_options == 0 {
            return Err(Error::InvalidParameter(format!(
                "space cardinalities must be >= 1, got |S|={n_states}, |A|={n_actions}, |O|={n_options}"
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            n_options,
        })
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s >= self.n_states {
            return Err(Error::IndexOutOfRange {
                what: "state",
                value: s,
                limit: self.n_states,
            });
        }
        Ok(())
    }

    fn check_action(&self, a: usize) -> Result<()> {
        if a >= self.n_actions {
            return Err(Error::IndexOutOfRange {
                what: "action",
                value: a,
                limit: self.n_actions,
            });
        }
        Ok(())
    }

    fn check_option(&self, o: usize) -> Result<()> {
        if o >= self.n_options {
            return Err(Error::IndexOutOfRange {
                what: "option",
                value: o,
                limit: self.n_options,
            });
        }
        Ok(())
    }

    fn check_termination(&self, b: usize) -> Result<()> {
        if b > 1 {
            return Err(Error::IndexOutOfRange {
                what: "termination indicator",
                value: b,
                limit: 2,
            });
        }
        Ok(())
    }
}

/// Which parameterization a [`PolicyFamily`] uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    /// Full conditional tables for all three policies.
    Tabular,
    /// The three-scalar line-world family; `Spaces` fixed to 4 states, 2
    /// actions, 2 options.
    TargetSeeking,
}

/// Parameter triple `(hi, lo, b)` for the three policies.
///
/// The variant must match the [`FamilyKind`] of the family evaluating it.
/// Tabular blocks are flat row-major tables: `hi[s][o]`, `lo[s][o][a]`,
/// `b[s][o_prev][b]`, each conditional slice a strictly positive pmf.
#[derive(Debug, Clone, PartialEq)]
pub enum Theta {
    TargetSeeking { hi: f64, lo: f64, b: f64 },
    Tabular { hi: Vec<f64>, lo: Vec<f64>, b: Vec<f64> },
}

/// Normalizes a raw nonnegative slice onto the floored simplex
/// `{p : p_i >= TABULAR_FLOOR, sum p = 1}`.
///
/// Entries whose proportional share falls below the floor are clamped to it
/// and the remaining mass is redistributed proportionally (iterated until
/// stable). This is the exact Euclidean-free KKT solution of maximizing
/// `sum_i raw_i * log(p_i)` over the floored simplex, so normalized expected
/// counts pushed through this function are exact constrained M-step slices.
pub(crate) fn floor_slice(raw: &mut [f64]) -> Result<()> {
    let n = raw.len();
    let f = TABULAR_FLOOR;
    let sum: f64 = raw.iter().sum();
    if !(sum > 0.0) || raw.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidDistribution(format!(
            "tabular slice must be nonnegative with positive sum, got {raw:?}"
        )));
    }
    if n as f64 * f >= 1.0 {
        return Err(Error::InvalidDistribution(format!(
            "slice of {n} entries cannot satisfy the {f} floor"
        )));
    }
    // The largest active entry always keeps a share of at least
    // (1 - n f)/n > f, so the active set never empties and the loop clamps
    // at most n - 1 times.
    let mut clamped = vec![false; n];
    loop {
        let n_clamped = clamped.iter().filter(|&&c| c).count();
        let avail = 1.0 - n_clamped as f64 * f;
        let sum_active: f64 = raw
            .iter()
            .zip(&clamped)
            .filter(|(_, &c)| !c)
            .map(|(&w, _)| w)
            .sum();
        if !(sum_active > 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "degenerate slice weights {raw:?}"
            )));
        }
        let scale = avail / sum_active;
        let mut changed = false;
        for (w, c) in raw.iter().zip(clamped.iter_mut()) {
            if !*c && *w * scale < f {
                *c = true;
                changed = true;
            }
        }
        if !changed {
            for (w, &c) in raw.iter_mut().zip(&clamped) {
                if c {
                    *w = f;
                } else {
                    *w *= scale;
                }
            }
            return Ok(());
        }
    }
}

impl Theta {
    /// Target-seeking parameters; each scalar must lie in [`SCALAR_BOX`].
    pub fn target_seeking(hi: f64, lo: f64, b: f64) -> Result<Self> {
        for (name, v) in [("hi", hi), ("lo", lo), ("b", b)] {
            if !(v >= SCALAR_BOX.0 && v <= SCALAR_BOX.1) {
                return Err(Error::InvalidParameter(format!(
                    "theta_{name} = {v} outside box [{}, {}]",
                    SCALAR_BOX.0, SCALAR_BOX.1
                )));
            }
        }
        Ok(Self::TargetSeeking { hi, lo, b })
    }

    /// Tabular parameters from raw nonnegative tables.
    ///
    /// Each conditional slice is normalized and floored, so inputs may be
    /// unnormalized counts. Shapes: `hi` is `|S|*|O|`, `lo` is `|S|*|O|*|A|`,
    /// `b` is `|S|*|O|*2`.
    pub fn tabular(spaces: &Spaces, hi: Vec<f64>, lo: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        let (ns, no, na) = (spaces.n_states, spaces.n_options, spaces.n_actions);
        if hi.len() != ns * no || lo.len() != ns * no * na || b.len() != ns * no * 2 {
            return Err(Error::LengthMismatch(format!(
                "tabular theta shapes: hi {} (want {}), lo {} (want {}), b {} (want {})",
                hi.len(),
                ns * no,
                lo.len(),
                ns * no * na,
                b.len(),
                ns * no * 2
            )));
        }
        let mut hi = hi;
        let mut lo = lo;
        let mut b = b;
        for s in hi.chunks_mut(no) {
            floor_slice(s)?;
        }
        for s in lo.chunks_mut(na) {
            floor_slice(s)?;
        }
        for s in b.chunks_mut(2) {
            floor_slice(s)?;
        }
        Ok(Self::Tabular { hi, lo, b })
    }

    /// Tabular parameters with all conditional slices uniform.
    pub fn tabular_uniform(spaces: &Spaces) -> Self {
        let (ns, no, na) = (spaces.n_states, spaces.n_options, spaces.n_actions);
        Self::Tabular {
            hi: vec![1.0 / no as f64; ns * no],
            lo: vec![1.0 / na as f64; ns * no * na],
            b: vec![0.5; ns * no * 2],
        }
    }

    /// Random tabular parameters: every conditional slice drawn from a flat
    /// Dirichlet (exponential weights, normalized, floored).
    pub fn random_tabular<R: Rng + ?Sized>(spaces: &Spaces, rng: &mut R) -> Self {
        let (ns, no, na) = (spaces.n_states, spaces.n_options, spaces.n_actions);
        let mut draw = |len: usize| -> Vec<f64> {
            (0..len)
                .map(|_| -rng.random::<f64>().max(1e-12).ln())
                .collect()
        };
        let hi = draw(ns * no);
        let lo = draw(ns * no * na);
        let b = draw(ns * no * 2);
        Self::tabular(spaces, hi, lo, b).expect("random tabular construction")
    }

    /// Random target-seeking parameters, uniform over the constraint box.
    pub fn random_target_seeking<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let (lo_box, hi_box) = SCALAR_BOX;
        let mut draw = || rng.random_range(lo_box..=hi_box);
        Self::TargetSeeking {
            hi: draw(),
            lo: draw(),
            b: draw(),
        }
    }

    /// All parameters flattened into one vector (`hi`, then `lo`, then `b`).
    pub fn flatten(&self) -> Vec<f64> {
        match self {
            Self::TargetSeeking { hi, lo, b } => vec![*hi, *lo, *b],
            Self::Tabular { hi, lo, b } => {
                let mut v = Vec::with_capacity(hi.len() + lo.len() + b.len());
                v.extend_from_slice(hi);
                v.extend_from_slice(lo);
                v.extend_from_slice(b);
                v
            }
        }
    }

    /// Euclidean distance between two parameter triples of the same shape.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        let a = self.flatten();
        let b = other.flatten();
        if a.len() != b.len() {
            return Err(Error::LengthMismatch(format!(
                "theta dimensions {} vs {}",
                a.len(),
                b.len()
            )));
        }
        Ok(a.iter()
            .zip(&b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt())
    }
}

/// A policy parameterization together with the failure probability `zeta`.
///
/// All evaluation methods are pure and read-only; a family can be shared
/// freely across threads.
#[derive(Debug, Clone)]
pub struct PolicyFamily {
    kind: FamilyKind,
    spaces: Spaces,
    zeta: f64,
}

impl PolicyFamily {
    pub fn new(kind: FamilyKind, spaces: Spaces, zeta: f64) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "zeta must lie in (0, 1), got {zeta}"
            )));
        }
        if kind == FamilyKind::TargetSeeking {
            let want = Spaces::new(4, 2, 2)?;
            if spaces != want {
                return Err(Error::InvalidParameter(format!(
                    "target-seeking family requires |S|=4, |A|=2, |O|=2, got {spaces:?}"
                )));
            }
        }
        Ok(Self { kind, spaces, zeta })
    }

    /// Tabular family over the given spaces.
    pub fn tabular(spaces: Spaces, zeta: f64) -> Result<Self> {
        Self::new(FamilyKind::Tabular, spaces, zeta)
    }

    /// The three-scalar line-world family (4 states, 2 actions, 2 options).
    pub fn target_seeking(zeta: f64) -> Result<Self> {
        Self::new(FamilyKind::TargetSeeking, Spaces::new(4, 2, 2)?, zeta)
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Checks that `theta` matches this family's kind and constraint set.
    pub fn check_theta(&self, theta: &Theta) -> Result<()> {
        match (self.kind, theta) {
            (FamilyKind::TargetSeeking, Theta::TargetSeeking { hi, lo, b }) => {
                for (name, v) in [("hi", *hi), ("lo", *lo), ("b", *b)] {
                    if !(v >= SCALAR_BOX.0 && v <= SCALAR_BOX.1) {
                        return Err(Error::InvalidParameter(format!(
                            "theta_{name} = {v} outside box [{}, {}]",
                            SCALAR_BOX.0, SCALAR_BOX.1
                        )));
                    }
                }
                Ok(())
            }
            (FamilyKind::Tabular, Theta::Tabular { hi, lo, b }) => {
                let (ns, no, na) = (self.spaces.n_states, self.spaces.n_options, self.spaces.n_actions);
                if hi.len() != ns * no || lo.len() != ns * no * na || b.len() != ns * no * 2 {
                    return Err(Error::LengthMismatch(
                        "tabular theta shape does not match spaces".into(),
                    ));
                }
                let check_slices = |v: &[f64], width: usize, name: &str| -> Result<()> {
                    for slice in v.chunks(width) {
                        let sum: f64 = slice.iter().sum();
                        if (sum - 1.0).abs() > 1e-9 || slice.iter().any(|&p| !(p > 0.0)) {
                            return Err(Error::InvalidDistribution(format!(
                                "tabular {name} slice not a strictly positive pmf: {slice:?}"
                            )));
                        }
                    }
                    Ok(())
                };
                check_slices(hi, no, "hi")?;
                check_slices(lo, na, "lo")?;
                check_slices(b, 2, "b")
            }
            _ => Err(Error::InvalidParameter(
                "theta variant does not match family kind".into(),
            )),
        }
    }

    /// High level policy `pi_hi(o | s)`.
    pub fn pi_hi(&self, theta: &Theta, o: usize, s: usize) -> Result<f64> {
        self.check_theta(theta)?;
        self.spaces.check_option(o)?;
        self.spaces.check_state(s)?;
        Ok(self.pi_hi_raw(theta, o, s))
    }

    /// Low level policy `pi_lo(a | s, o)`.
    pub fn pi_lo(&self, theta: &Theta, a: usize, s: usize, o: usize) -> Result<f64> {
        self.check_theta(theta)?;
        self.spaces.check_action(a)?;
        self.spaces.check_state(s)?;
        self.spaces.check_option(o)?;
        Ok(self.pi_lo_raw(theta, a, s, o))
    }

    /// Termination policy `pi_b(b | s, o_prev)`.
    pub fn pi_b(&self, theta: &Theta, b: usize, s: usize, o_prev: usize) -> Result<f64> {
        self.check_theta(theta)?;
        self.spaces.check_termination(b)?;
        self.spaces.check_state(s)?;
        self.spaces.check_option(o_prev)?;
        Ok(self.pi_b_raw(theta, b, s, o_prev))
    }

    /// High level policy combined with the failure mechanism,
    /// `bar_pi_hi(o | s, o_prev, b)`.
    pub fn bar_pi_hi(
        &self,
        theta: &Theta,
        o: usize,
        s: usize,
        o_prev: usize,
        b: usize,
    ) -> Result<f64> {
        self.check_theta(theta)?;
        self.spaces.check_option(o)?;
        self.spaces.check_state(s)?;
        self.spaces.check_option(o_prev)?;
        self.spaces.check_termination(b)?;
        Ok(self.bar_pi_hi_raw(theta, o, s, o_prev, b))
    }

    /// Per-step joint factor
    /// `h(o_prev, s, a, o, b) = pi_b(b|s,o_prev) * bar_pi_hi(o|s,o_prev,b) * pi_lo(a|s,o)`.
    pub fn joint_factor(
        &self,
        theta: &Theta,
        o_prev: usize,
        s: usize,
        a: usize,
        o: usize,
        b: usize,
    ) -> Result<f64> {
        self.check_theta(theta)?;
        self.spaces.check_option(o_prev)?;
        self.spaces.check_state(s)?;
        self.spaces.check_action(a)?;
        self.spaces.check_option(o)?;
        self.spaces.check_termination(b)?;
        Ok(self.pi_b_raw(theta, b, s, o_prev)
            * self.bar_pi_hi_raw(theta, o, s, o_prev, b)
            * self.pi_lo_raw(theta, a, s, o))
    }

    /// Dense evaluation tables for `theta`, used by the smoothing and EM hot
    /// loops. Validates feasibility once.
    pub fn tables(&self, theta: &Theta) -> Result<PolicyTables> {
        self.check_theta(theta)?;
        let (ns, no, na) = (self.spaces.n_states, self.spaces.n_options, self.spaces.n_actions);
        let mut hi = vec![0.0; ns * no];
        let mut lo = vec![0.0; ns * no * na];
        let mut b = vec![0.0; ns * no * 2];
        for s in 0..ns {
            for o in 0..no {
                hi[s * no + o] = self.pi_hi_raw(theta, o, s);
                for a in 0..na {
                    lo[(s * no + o) * na + a] = self.pi_lo_raw(theta, a, s, o);
                }
                for bi in 0..2 {
                    b[(s * no + o) * 2 + bi] = self.pi_b_raw(theta, bi, s, o);
                }
            }
        }
        Ok(PolicyTables {
            spaces: self.spaces,
            zeta: self.zeta,
            hi,
            lo,
            b,
        })
    }

    fn pi_hi_raw(&self, theta: &Theta, o: usize, s: usize) -> f64 {
        match theta {
            Theta::TargetSeeking { hi, .. } => {
                // pi_hi(LEFTEND | s) is `hi` on the left half {0,1} and
                // `1 - hi` on the right half {2,3}.
                let p_left = if s <= 1 { *hi } else { 1.0 - *hi };
                if o == LEFTEND {
                    p_left
                } else {
                    1.0 - p_left
                }
            }
            Theta::Tabular { hi, .. } => hi[s * self.spaces.n_options + o],
        }
    }

    fn pi_lo_raw(&self, theta: &Theta, a: usize, s: usize, o: usize) -> f64 {
        match theta {
            Theta::TargetSeeking { lo, .. } => {
                let follows = (o == LEFTEND && a == LEFT) || (o == RIGHTEND && a == RIGHT);
                if follows {
                    *lo
                } else {
                    1.0 - *lo
                }
            }
            Theta::Tabular { lo, .. } => {
                let na = self.spaces.n_actions;
                lo[(s * self.spaces.n_options + o) * na + a]
            }
        }
    }

    fn pi_b_raw(&self, theta: &Theta, b: usize, s: usize, o_prev: usize) -> f64 {
        match theta {
            Theta::TargetSeeking { b: tb, .. } => {
                // The option terminates with probability `tb` exactly at its
                // target end state (0 for LEFTEND, 3 for RIGHTEND).
                let at_target = (o_prev == LEFTEND && s == 0) || (o_prev == RIGHTEND && s == 3);
                let p_term = if at_target { *tb } else { 1.0 - *tb };
                if b == 1 {
                    p_term
                } else {
                    1.0 - p_term
                }
            }
            Theta::Tabular { b: tb, .. } => tb[(s * self.spaces.n_options + o_prev) * 2 + b],
        }
    }

    fn bar_pi_hi_raw(&self, theta: &Theta, o: usize, s: usize, o_prev: usize, b: usize) -> f64 {
        if b == 1 {
            self.pi_hi_raw(theta, o, s)
        } else {
            let no = self.spaces.n_options as f64;
            if o == o_prev {
                1.0 - self.zeta + self.zeta / no
            } else {
                self.zeta / no
            }
        }
    }
}

/// Dense per-parameter evaluation tables.
///
/// Built once per `(family, theta)` via [`PolicyFamily::tables`]; the
/// accessors are branch-free lookups suitable for inner loops. Indices are
/// assumed valid (callers validate once at the boundary).
#[derive(Debug, Clone)]
pub struct PolicyTables {
    spaces: Spaces,
    zeta: f64,
    hi: Vec<f64>,
    lo: Vec<f64>,
    b: Vec<f64>,
}

impl PolicyTables {
    pub fn spaces(&self) -> &Spaces {
        &self.spaces
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    #[inline]
    pub fn pi_hi(&self, o: usize, s: usize) -> f64 {
        self.hi[s * self.spaces.n_options + o]
    }

    #[inline]
    pub fn pi_lo(&self, a: usize, s: usize, o: usize) -> f64 {
        self.lo[(s * self.spaces.n_options + o) * self.spaces.n_actions + a]
    }

    #[inline]
    pub fn pi_b(&self, b: usize, s: usize, o_prev: usize) -> f64 {
        self.b[(s * self.spaces.n_options + o_prev) * 2 + b]
    }

    #[inline]
    pub fn bar_pi_hi(&self, o: usize, s: usize, o_prev: usize, b: usize) -> f64 {
        if b == 1 {
            self.pi_hi(o, s)
        } else if o == o_prev {
            1.0 - self.zeta + self.zeta / self.spaces.n_options as f64
        } else {
            self.zeta / self.spaces.n_options as f64
        }
    }

    /// `h(o_prev, s, a, o, b) = pi_b * bar_pi_hi * pi_lo`.
    #[inline]
    pub fn h(&self, o_prev: usize, s: usize, a: usize, o: usize, b: usize) -> f64 {
        self.pi_b(b, s, o_prev) * self.bar_pi_hi(o, s, o_prev, b) * self.pi_lo(a, s, o)
    }
}

/// Tabular environment transition kernel `P(s' | s, a)`.
#[derive(Debug, Clone)]
pub struct Environment {
    n_states: usize,
    n_actions: usize,
    /// Row-major `[s][a][s']`.
    probs: Vec<f64>,
}

impl Environment {
    /// Validates that every `(s, a)` row is a pmf.
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidParameter(
                "environment needs at least one state and action".into(),
            ));
        }
        if probs.len() != n_states * n_actions * n_states {
            return Err(Error::LengthMismatch(format!(
                "environment table length {} != |S|*|A|*|S| = {}",
                probs.len(),
                n_states * n_actions * n_states
            )));
        }
        for (i, row) in probs.chunks(n_states).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 || row.iter().any(|&p| !(p >= 0.0)) {
                return Err(Error::InvalidDistribution(format!(
                    "environment row {i} sums to {sum}, entries {row:?}"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    /// Random environment: every row a strictly positive random pmf.
    pub fn random<R: Rng + ?Sized>(spaces: &Spaces, rng: &mut R) -> Self {
        let (ns, na) = (spaces.n_states, spaces.n_actions);
        let mut probs = vec![0.0; ns * na * ns];
        for row in probs.chunks_mut(ns) {
            let mut sum = 0.0;
            for p in row.iter_mut() {
                *p = -rng.random::<f64>().max(1e-12).ln();
                sum += *p;
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
        }
        Self::new(ns, na, probs).expect("random environment construction")
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn prob(&self, s_next: usize, s: usize, a: usize) -> f64 {
        self.probs[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// The transition row `P(. | s, a)`.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.probs[start..start + self.n_states]
    }
}

/// Conditional prior `mu(o_0 | s_1)` over the option active before the first
/// observed step.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorMu {
    weights: Vec<f64>,
}

impl PriorMu {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if weights.is_empty() || (sum - 1.0).abs() > 1e-12 || weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(Error::InvalidDistribution(format!(
                "mu must be a pmf, got {weights:?} (sum {sum})"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n_options: usize) -> Self {
        Self {
            weights: vec![1.0 / n_options as f64; n_options],
        }
    }

    /// Point mass on a single option.
    pub fn point_mass(n_options: usize, o: usize) -> Result<Self> {
        if o >= n_options {
            return Err(Error::IndexOutOfRange {
                what: "option",
                value: o,
                limit: n_options,
            });
        }
        let mut weights = vec![0.0; n_options];
        weights[o] = 1.0;
        Ok(Self { weights })
    }

    /// Random pmf over the options.
    pub fn random<R: Rng + ?Sized>(n_options: usize, rng: &mut R) -> Self {
        let mut weights: Vec<f64> = (0..n_options)
            .map(|_| -rng.random::<f64>().max(1e-12).ln())
            .collect();
        let sum: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= sum;
        }
        Self { weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn prob(&self, o: usize) -> f64 {
        self.weights[o]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn theta_star() -> Theta {
        Theta::target_seeking(0.6, 0.7, 0.8).unwrap()
    }

    #[test]
    fn target_seeking_pi_hi_matches_line_world_structure() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = theta_star();
        // Left half of the line: LEFTEND chosen with probability theta_hi.
        assert_eq!(fam.pi_hi(&th, LEFTEND, 0).unwrap(), 0.6);
        assert_eq!(fam.pi_hi(&th, LEFTEND, 1).unwrap(), 0.6);
        // Right half: complement.
        assert!((fam.pi_hi(&th, LEFTEND, 2).unwrap() - 0.4).abs() < 1e-15);
        assert!((fam.pi_hi(&th, LEFTEND, 3).unwrap() - 0.4).abs() < 1e-15);
        for s in 0..4 {
            let sum: f64 = (0..2).map(|o| fam.pi_hi(&th, o, s).unwrap()).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn target_seeking_pi_lo_follows_option_direction() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = theta_star();
        for s in 0..4 {
            assert_eq!(fam.pi_lo(&th, LEFT, s, LEFTEND).unwrap(), 0.7);
            assert!((fam.pi_lo(&th, RIGHT, s, LEFTEND).unwrap() - 0.3).abs() < 1e-15);
            assert_eq!(fam.pi_lo(&th, RIGHT, s, RIGHTEND).unwrap(), 0.7);
        }
    }

    #[test]
    fn target_seeking_pi_b_terminates_at_target_state() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = theta_star();
        assert_eq!(fam.pi_b(&th, 1, 0, LEFTEND).unwrap(), 0.8);
        assert!((fam.pi_b(&th, 1, 1, LEFTEND).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(fam.pi_b(&th, 1, 3, RIGHTEND).unwrap(), 0.8);
        assert!((fam.pi_b(&th, 1, 0, RIGHTEND).unwrap() - 0.2).abs() < 1e-15);
        for s in 0..4 {
            for o in 0..2 {
                let sum = fam.pi_b(&th, 0, s, o).unwrap() + fam.pi_b(&th, 1, s, o).unwrap();
                assert!((sum - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tabular_uniform_evaluates_to_uniform() {
        let spaces = Spaces::new(3, 2, 3).unwrap();
        let fam = PolicyFamily::tabular(spaces, 0.1).unwrap();
        let th = Theta::tabular_uniform(&spaces);
        assert!((fam.pi_hi(&th, 1, 2).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((fam.pi_lo(&th, 0, 1, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!((fam.pi_b(&th, 1, 0, 1).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn bar_pi_hi_failure_cases() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = theta_star();
        // b = 0: stay with probability 1 - zeta + zeta/|O|, switch with zeta/|O|.
        assert!((fam.bar_pi_hi(&th, 0, 2, 0, 0).unwrap() - 0.95).abs() < 1e-15);
        assert!((fam.bar_pi_hi(&th, 1, 2, 0, 0).unwrap() - 0.05).abs() < 1e-15);
        // b = 1 delegates to pi_hi for every argument combination.
        for s in 0..4 {
            for o in 0..2 {
                for o_prev in 0..2 {
                    assert_eq!(
                        fam.bar_pi_hi(&th, o, s, o_prev, 1).unwrap(),
                        fam.pi_hi(&th, o, s).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn joint_factor_is_product_of_policies() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = theta_star();
        // At the left end state with the LEFTEND option terminating:
        // 0.8 * 0.6 * 0.7.
        let h = fam.joint_factor(&th, LEFTEND, 0, LEFT, LEFTEND, 1).unwrap();
        assert!((h - 0.336).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let spaces = Spaces::new(4, 2, 3).unwrap();
        let tab = PolicyFamily::tabular(spaces, 0.2).unwrap();
        let tth = Theta::random_tabular(&spaces, &mut rng);
        // Summing h over (o, b) equals sum_b pi_b * sum_o bar_pi_hi * pi_lo.
        for o_prev in 0..3 {
            for s in 0..4 {
                for a in 0..2 {
                    let lhs: f64 = (0..3)
                        .flat_map(|o| (0..2).map(move |b| (o, b)))
                        .map(|(o, b)| tab.joint_factor(&tth, o_prev, s, a, o, b).unwrap())
                        .sum();
                    let rhs: f64 = (0..2)
                        .map(|b| {
                            tab.pi_b(&tth, b, s, o_prev).unwrap()
                                * (0..3)
                                    .map(|o| {
                                        tab.bar_pi_hi(&tth, o, s, o_prev, b).unwrap()
                                            * tab.pi_lo(&tth, a, s, o).unwrap()
                                    })
                                    .sum::<f64>()
                        })
                        .sum();
                    assert!((lhs - rhs).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conditional_pmfs_sum_to_one_and_stay_positive() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spaces = Spaces::new(4, 2, 3).unwrap();
        let fam = PolicyFamily::tabular(spaces, 0.15).unwrap();
        for _ in 0..20 {
            let th = Theta::random_tabular(&spaces, &mut rng);
            for s in 0..4 {
                let hi_sum: f64 = (0..3).map(|o| fam.pi_hi(&th, o, s).unwrap()).sum();
                assert!((hi_sum - 1.0).abs() < 1e-12);
                for o in 0..3 {
                    assert!(fam.pi_hi(&th, o, s).unwrap() >= TABULAR_FLOOR);
                    let lo_sum: f64 = (0..2).map(|a| fam.pi_lo(&th, a, s, o).unwrap()).sum();
                    assert!((lo_sum - 1.0).abs() < 1e-12);
                    let b_sum: f64 = (0..2).map(|b| fam.pi_b(&th, b, s, o).unwrap()).sum();
                    assert!((b_sum - 1.0).abs() < 1e-12);
                    for o_prev in 0..3 {
                        for b in 0..2 {
                            let bar_sum: f64 = (0..3)
                                .map(|oo| fam.bar_pi_hi(&th, oo, s, o_prev, b).unwrap())
                                .sum();
                            assert!((bar_sum - 1.0).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn out_of_range_and_infeasible_inputs_error() {
        let fam = PolicyFamily::target_seeking(0.1).unwrap();
        let th = theta_star();
        assert!(fam.pi_hi(&th, 2, 0).is_err());
        assert!(fam.pi_hi(&th, 0, 4).is_err());
        assert!(fam.pi_b(&th, 2, 0, 0).is_err());
        assert!(Theta::target_seeking(0.95, 0.7, 0.8).is_err());
        // Kind mismatch is infeasible.
        let spaces = Spaces::new(4, 2, 2).unwrap();
        let tab = Theta::tabular_uniform(&spaces);
        assert!(fam.pi_hi(&tab, 0, 0).is_err());
    }

    #[test]
    fn zero_probability_tabular_entries_are_rejected() {
        let spaces = Spaces::new(2, 2, 2).unwrap();
        let fam = PolicyFamily::tabular(spaces, 0.1).unwrap();
        // Bypass the flooring constructor; evaluation must still refuse the
        // degenerate table.
        let th = Theta::Tabular {
            hi: vec![0.0, 1.0, 0.5, 0.5],
            lo: vec![0.5; 8],
            b: vec![0.5; 8],
        };
        assert!(fam.joint_factor(&th, 0, 0, 0, 0, 1).is_err());
        assert!(fam.pi_hi(&th, 0, 0).is_err());
    }

    #[test]
    fn tables_agree_with_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spaces = Spaces::new(3, 2, 2).unwrap();
        let fam = PolicyFamily::tabular(spaces, 0.3).unwrap();
        let th = Theta::random_tabular(&spaces, &mut rng);
        let tables = fam.tables(&th).unwrap();
        for s in 0..3 {
            for o in 0..2 {
                assert_eq!(tables.pi_hi(o, s), fam.pi_hi(&th, o, s).unwrap());
                for a in 0..2 {
                    assert_eq!(tables.pi_lo(a, s, o), fam.pi_lo(&th, a, s, o).unwrap());
                }
                for b in 0..2 {
                    assert_eq!(tables.pi_b(b, s, o), fam.pi_b(&th, b, s, o).unwrap());
                    for o_prev in 0..2 {
                        for a in 0..2 {
                            assert_eq!(
                                tables.h(o_prev, s, a, o, b),
                                fam.joint_factor(&th, o_prev, s, a, o, b).unwrap()
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn flooring_keeps_uniform_slices_exact() {
        let spaces = Spaces::new(2, 2, 2).unwrap();
        let th = Theta::tabular(
            &spaces,
            vec![1.0, 1.0, 1.0, 1.0],
            vec![0.5; 8],
            vec![2.0; 8],
        )
        .unwrap();
        if let Theta::Tabular { hi, .. } = &th {
            for &p in hi {
                assert_eq!(p, 0.5);
            }
        }
    }

    #[test]
    fn l2_distance_matches_hand_value() {
        let a = Theta::target_seeking(0.5, 0.6, 0.7).unwrap();
        let b = theta_star();
        assert!((a.l2_distance(&b).unwrap() - 0.03f64.sqrt()).abs() < 1e-15);
    }
}
