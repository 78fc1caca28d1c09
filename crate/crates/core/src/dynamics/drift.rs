//! Drift functionals `b_i(t, ω)` with finite range and finite memory.

use std::cell::Cell;
use std::fmt::Debug;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Neighborhood, Site};

/// How a window reaching before time zero is served.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreHistory {
    /// The path is constant, equal to its initial value, for `s < 0`.
    #[default]
    Frozen,
    /// Values before time zero are unavailable; evaluators see `None`.
    Truncated,
}

/// Read-only view of the path around one site at one grid time.
///
/// Slots follow the order of [`Neighborhood::offsets`]. Lags are counted in
/// grid steps. Reading further back than the declared memory marks the
/// window as violated, which the caller turns into a locality error.
pub struct PathWindow<'a> {
    series: &'a [Vec<f64>],
    slots: &'a [usize],
    nbhd: &'a Neighborhood,
    step: usize,
    dt: f64,
    start: f64,
    memory_steps: usize,
    prehistory: PreHistory,
    violation: Cell<bool>,
}

impl<'a> PathWindow<'a> {
    pub fn new(
        series: &'a [Vec<f64>],
        slots: &'a [usize],
        nbhd: &'a Neighborhood,
        step: usize,
        dt: f64,
        memory_steps: usize,
        prehistory: PreHistory,
    ) -> Self {
        PathWindow {
            series,
            slots,
            nbhd,
            step,
            dt,
            start: 0.0,
            memory_steps,
            prehistory,
            violation: Cell::new(false),
        }
    }

    /// Sets the time of the first stored sample.
    pub fn starting_at(mut self, start: f64) -> Self {
        self.start = start;
        self
    }

    pub fn nbhd(&self) -> &Neighborhood {
        self.nbhd
    }

    /// Current time.
    pub fn time(&self) -> f64 {
        self.start + self.step as f64 * self.dt
    }

    /// Time of the sample `lag` steps back.
    pub fn time_at_lag(&self, lag: usize) -> f64 {
        self.time() - lag as f64 * self.dt
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn memory_steps(&self) -> usize {
        self.memory_steps
    }

    /// Slot of the centre site.
    pub fn center_slot(&self) -> usize {
        self.nbhd.slot(&Site::origin(self.nbhd.dim())).expect("neighbourhood contains the origin")
    }

    /// Value at neighbour `slot`, `lag` steps in the past.
    pub fn value(&self, slot: usize, lag: usize) -> Option<f64> {
        if lag > self.memory_steps || slot >= self.slots.len() {
            self.violation.set(true);
            return None;
        }
        let s = &self.series[self.slots[slot]];
        if lag <= self.step {
            Some(s[self.step - lag])
        } else if self.start > 0.0 {
            // The stored path does not reach back far enough.
            self.violation.set(true);
            None
        } else {
            match self.prehistory {
                PreHistory::Frozen => Some(s[0]),
                PreHistory::Truncated => None,
            }
        }
    }

    pub fn current(&self, slot: usize) -> f64 {
        self.value(slot, 0).expect("current value is always available")
    }

    pub fn center(&self) -> f64 {
        self.current(self.center_slot())
    }

    /// Largest lag an integral over the memory window should use: the
    /// memory, cut at time zero.
    pub fn integral_lags(&self) -> usize {
        let since_zero = (self.time() / self.dt).round() as usize;
        self.memory_steps.min(since_zero)
    }

    pub fn violated(&self) -> bool {
        self.violation.get()
    }
}

/// A bounded drift functional with finite range and finite memory.
pub trait DriftFunctional: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn neighborhood(&self) -> &Neighborhood;
    /// Memory length `t0` in time units (zero for Markov drifts).
    fn memory(&self) -> f64;
    /// Declared bound `b̄` on `|b|`.
    fn bound(&self) -> f64;
    fn evaluate(&self, t: f64, window: &PathWindow<'_>) -> f64;
}

/// Drift intensity together with the functional.
#[derive(Debug, Clone)]
pub struct DriftSpec {
    pub beta: f64,
    pub drift: Arc<dyn DriftFunctional>,
    pub prehistory: PreHistory,
}

impl DriftSpec {
    pub fn new(beta: f64, drift: Arc<dyn DriftFunctional>) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::setup(format!("beta must be finite and nonnegative, got {beta}")));
        }
        if !(drift.bound() >= 0.0 && drift.bound().is_finite()) {
            return Err(Error::setup("drift bound must be finite and nonnegative"));
        }
        if !(drift.memory() >= 0.0 && drift.memory().is_finite()) {
            return Err(Error::setup("drift memory must be finite and nonnegative"));
        }
        Ok(DriftSpec {
            beta,
            drift,
            prehistory: PreHistory::Frozen,
        })
    }

    pub fn from_builtin(beta: f64, builtin: &BuiltinDrift, dim: usize) -> Result<Self> {
        DriftSpec::new(beta, builtin.build(dim)?)
    }

    pub fn with_prehistory(mut self, p: PreHistory) -> Self {
        self.prehistory = p;
        self
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Ok(DriftSpec::new(beta, self.drift.clone())?.with_prehistory(self.prehistory))
    }

    pub fn nbhd(&self) -> &Neighborhood {
        self.drift.neighborhood()
    }

    pub fn memory(&self) -> f64 {
        self.drift.memory()
    }

    pub fn bound(&self) -> f64 {
        self.drift.bound()
    }

    pub fn has_memory(&self) -> bool {
        self.memory() > 0.0
    }

    /// Memory in grid steps; the step must divide the memory.
    pub fn memory_steps(&self, dt: f64) -> Result<usize> {
        let m = self.memory();
        if m == 0.0 {
            return Ok(0);
        }
        if dt > m * (1.0 + 1e-12) {
            return Err(Error::setup(format!("time step {dt} exceeds the drift memory {m}")));
        }
        let steps = (m / dt).round();
        if ((steps * dt) - m).abs() > 1e-9 * m {
            return Err(Error::setup(format!("time step {dt} does not divide the drift memory {m}")));
        }
        Ok(steps as usize)
    }

    /// `b_i(t)` with bound and locality checks.
    pub fn eval_checked(&self, t: f64, window: &PathWindow<'_>, site: &Site) -> Result<f64> {
        let b = self.drift.evaluate(t, window);
        if window.violated() {
            return Err(Error::Locality(format!(
                "drift '{}' at site {site} read outside its declared window",
                self.drift.name()
            )));
        }
        if !b.is_finite() {
            return Err(Error::numerical(format!("drift '{}' is not finite at site {site}, t = {t}", self.drift.name())));
        }
        let bound = self.bound();
        if b.abs() > bound * (1.0 + 1e-12) + 1e-300 {
            return Err(Error::BoundViolation {
                value: b.abs(),
                bound,
                site: site.to_string(),
                time: t,
            });
        }
        Ok(b)
    }
}

/// Bounded scalar link functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundedFn {
    Tanh,
    Sin,
    Cos,
    Clamp { r: f64 },
}

impl BoundedFn {
    pub fn apply(&self, x: f64) -> f64 {
        match self {
            BoundedFn::Tanh => x.tanh(),
            BoundedFn::Sin => x.sin(),
            BoundedFn::Cos => x.cos(),
            BoundedFn::Clamp { r } => x.clamp(-r, *r),
        }
    }

    pub fn sup(&self) -> f64 {
        match self {
            BoundedFn::Clamp { r } => *r,
            _ => 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            BoundedFn::Clamp { r } if !(*r >= 0.0 && r.is_finite()) => Err(Error::setup("clamp radius must be finite and nonnegative")),
            _ => Ok(()),
        }
    }
}

/// Memory kernel `ε(s)` on `[0, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryKernel {
    /// `amp · e^{-rate s}`, total mass `|amp| / rate`.
    Exponential { amp: f64, rate: f64 },
    /// `amp · 1[s <= until]`, total mass `|amp| · until`.
    Step { amp: f64, until: f64 },
}

impl MemoryKernel {
    /// `∫_a^b ε(s) ds`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match *self {
            MemoryKernel::Exponential { amp, rate } => amp * ((-rate * a).exp() - (-rate * b).exp()) / rate,
            MemoryKernel::Step { amp, until } => amp * (b.min(until) - a.min(until)).max(0.0),
        }
    }

    /// `∫_0^∞ |ε|`.
    pub fn total_mass(&self) -> f64 {
        match *self {
            MemoryKernel::Exponential { amp, rate } => amp.abs() / rate,
            MemoryKernel::Step { amp, until } => amp.abs() * until,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            MemoryKernel::Exponential { amp, rate } => amp.is_finite() && rate > 0.0 && rate.is_finite(),
            MemoryKernel::Step { amp, until } => amp.is_finite() && until >= 0.0 && until.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::setup(format!("memory kernel {self:?} is not integrable")))
        }
    }
}

/// Deterministic bounded-variation integrator `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    /// `V(s) = s`.
    Lebesgue,
    /// `V(s) = sin(freq · s)`.
    Sine { freq: f64 },
}

impl Integrator {
    pub fn value(&self, s: f64) -> f64 {
        match *self {
            Integrator::Lebesgue => s,
            Integrator::Sine { freq } => (freq * s).sin(),
        }
    }

    /// Bound on the total variation over any window of length `len`.
    pub fn variation_bound(&self, len: f64) -> f64 {
        match *self {
            Integrator::Lebesgue => len,
            Integrator::Sine { freq } => freq.abs() * len,
        }
    }
}

/// Serializable catalogue of the built-in drift families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BuiltinDrift {
    /// `b ≡ c` on the neighbourhood of radius `range`.
    Constant {
        c: f64,
        #[serde(default)]
        range: i64,
    },
    /// Markov finite-range drift
    /// `b_i = field · g(x_i) + coupling · Σ_{o ≠ 0} g(x_{i+o} - x_i)`.
    Markov {
        coupling: f64,
        #[serde(default)]
        field: f64,
        #[serde(default = "default_range")]
        range: i64,
        link: BoundedFn,
    },
    /// Periodic forcing `A sin(ω t)`.
    Resonance {
        amplitude: f64,
        #[serde(default = "one")]
        omega: f64,
    },
    /// Delayed feedback `α · clamp(x_i(t - t0), -R, R)`.
    DelayedFeedback { alpha: f64, delay: f64, saturation: f64 },
    /// `∫_{t - t0}^t ε(s) f(x_i(s)) ds`, cut at time zero.
    TimeMemory {
        memory: f64,
        kernel: MemoryKernel,
        f: BoundedFn,
    },
    /// `∫_{t - t0}^t e^{-(t - s)/τ} g(field · x_i(s) + coupling · Σ_{o≠0} x_{i+o}(s)) dV_s`.
    SpaceTime {
        memory: f64,
        tau: f64,
        coupling: f64,
        #[serde(default)]
        field: f64,
        #[serde(default = "default_range")]
        range: i64,
        link: BoundedFn,
        integrator: Integrator,
    },
}

fn default_range() -> i64 {
    1
}

fn one() -> f64 {
    1.0
}

/// Name and one-line description of each built-in family.
pub fn builtin_drifts() -> Vec<(&'static str, &'static str)> {
    vec![
        ("constant", "constant drift c"),
        ("markov", "Markov finite-range bounded drift"),
        ("resonance", "periodic forcing A sin(omega t), bound A"),
        ("delayed_feedback", "saturated delayed feedback alpha clamp(x(t - t0)), bound alpha R"),
        ("time_memory", "memory integral of eps(s) f(x_i(s)), bound F E"),
        ("space_time", "space-time integral against a bounded-variation integrator"),
    ]
}

impl BuiltinDrift {
    pub fn build(&self, dim: usize) -> Result<Arc<dyn DriftFunctional>> {
        let finite = |name: &str, v: f64| -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::setup(format!("{name} must be finite")))
            }
        };
        let positive = |name: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::setup(format!("{name} must be positive, got {v}")))
            }
        };
        let ball = |r: i64| -> Result<Neighborhood> {
            if r < 0 {
                return Err(Error::setup("neighbourhood range must be nonnegative"));
            }
            Ok(Neighborhood::ball(dim, r))
        };
        Ok(match self {
            BuiltinDrift::Constant { c, range } => {
                finite("c", *c)?;
                Arc::new(ConstantDrift { c: *c, nbhd: ball(*range)? })
            }
            BuiltinDrift::Markov { coupling, field, range, link } => {
                finite("coupling", *coupling)?;
                finite("field", *field)?;
                link.validate()?;
                Arc::new(MarkovDrift {
                    coupling: *coupling,
                    field: *field,
                    link: *link,
                    nbhd: ball(*range)?,
                })
            }
            BuiltinDrift::Resonance { amplitude, omega } => {
                positive("amplitude", *amplitude)?;
                finite("omega", *omega)?;
                Arc::new(ResonanceDrift {
                    amplitude: *amplitude,
                    omega: *omega,
                    nbhd: Neighborhood::origin_only(dim),
                })
            }
            BuiltinDrift::DelayedFeedback { alpha, delay, saturation } => {
                finite("alpha", *alpha)?;
                positive("delay", *delay)?;
                if !(*saturation >= 0.0 && saturation.is_finite()) {
                    return Err(Error::setup("delayed feedback needs a finite saturation radius"));
                }
                Arc::new(DelayedFeedback {
                    alpha: *alpha,
                    delay: *delay,
                    saturation: *saturation,
                    nbhd: Neighborhood::origin_only(dim),
                })
            }
            BuiltinDrift::TimeMemory { memory, kernel, f } => {
                positive("memory", *memory)?;
                kernel.validate()?;
                f.validate()?;
                Arc::new(TimeMemory {
                    memory: *memory,
                    kernel: *kernel,
                    f: *f,
                    nbhd: Neighborhood::origin_only(dim),
                })
            }
            BuiltinDrift::SpaceTime {
                memory,
                tau,
                coupling,
                field,
                range,
                link,
                integrator,
            } => {
                positive("memory", *memory)?;
                positive("tau", *tau)?;
                finite("coupling", *coupling)?;
                finite("field", *field)?;
                link.validate()?;
                if let Integrator::Sine { freq } = integrator {
                    finite("integrator frequency", *freq)?;
                }
                Arc::new(SpaceTimeDrift {
                    memory: *memory,
                    tau: *tau,
                    coupling: *coupling,
                    field: *field,
                    link: *link,
                    integrator: *integrator,
                    nbhd: ball(*range)?,
                })
            }
        })
    }
}

#[derive(Debug)]
pub struct ConstantDrift {
    pub c: f64,
    pub nbhd: Neighborhood,
}

impl DriftFunctional for ConstantDrift {
    fn name(&self) -> &str {
        "constant"
    }
    fn neighborhood(&self) -> &Neighborhood {
        &self.nbhd
    }
    fn memory(&self) -> f64 {
        0.0
    }
    fn bound(&self) -> f64 {
        self.c.abs()
    }
    fn evaluate(&self, _t: f64, _w: &PathWindow<'_>) -> f64 {
        self.c
    }
}

#[derive(Debug)]
pub struct MarkovDrift {
    pub coupling: f64,
    pub field: f64,
    pub link: BoundedFn,
    pub nbhd: Neighborhood,
}

impl DriftFunctional for MarkovDrift {
    fn name(&self) -> &str {
        "markov"
    }
    fn neighborhood(&self) -> &Neighborhood {
        &self.nbhd
    }
    fn memory(&self) -> f64 {
        0.0
    }
    fn bound(&self) -> f64 {
        (self.field.abs() + self.coupling.abs() * (self.nbhd.len() - 1) as f64) * self.link.sup()
    }
    fn evaluate(&self, _t: f64, w: &PathWindow<'_>) -> f64 {
        let c = w.center_slot();
        let xi = w.current(c);
        let mut b = self.field * self.link.apply(xi);
        for s in (0..self.nbhd.len()).filter(|&s| s != c) {
            b += self.coupling * self.link.apply(w.current(s) - xi);
        }
        b
    }
}

#[derive(Debug)]
pub struct ResonanceDrift {
    pub amplitude: f64,
    pub omega: f64,
    pub nbhd: Neighborhood,
}

impl DriftFunctional for ResonanceDrift {
    fn name(&self) -> &str {
        "resonance"
    }
    fn neighborhood(&self) -> &Neighborhood {
        &self.nbhd
    }
    fn memory(&self) -> f64 {
        0.0
    }
    fn bound(&self) -> f64 {
        self.amplitude
    }
    fn evaluate(&self, t: f64, _w: &PathWindow<'_>) -> f64 {
        self.amplitude * (self.omega * t).sin()
    }
}

#[derive(Debug)]
pub struct DelayedFeedback {
    pub alpha: f64,
    pub delay: f64,
    pub saturation: f64,
    pub nbhd: Neighborhood,
}

impl DriftFunctional for DelayedFeedback {
    fn name(&self) -> &str {
        "delayed_feedback"
    }
    fn neighborhood(&self) -> &Neighborhood {
        &self.nbhd
    }
    fn memory(&self) -> f64 {
        self.delay
    }
    fn bound(&self) -> f64 {
        self.alpha.abs() * self.saturation
    }
    fn evaluate(&self, _t: f64, w: &PathWindow<'_>) -> f64 {
        match w.value(w.center_slot(), w.memory_steps()) {
            Some(x) => self.alpha * x.clamp(-self.saturation, self.saturation),
            None => 0.0,
        }
    }
}

#[derive(Debug)]
pub struct TimeMemory {
    pub memory: f64,
    pub kernel: MemoryKernel,
    pub f: BoundedFn,
    pub nbhd: Neighborhood,
}

impl DriftFunctional for TimeMemory {
    fn name(&self) -> &str {
        "time_memory"
    }
    fn neighborhood(&self) -> &Neighborhood {
        &self.nbhd
    }
    fn memory(&self) -> f64 {
        self.memory
    }
    fn bound(&self) -> f64 {
        self.f.sup() * self.kernel.total_mass()
    }
    fn evaluate(&self, _t: f64, w: &PathWindow<'_>) -> f64 {
        let c = w.center_slot();
        (1..=w.integral_lags())
            .map(|lag| {
                let s = w.time_at_lag(lag);
                let x = w.value(c, lag).unwrap_or(0.0);
                self.kernel.integral(s, s + w.dt()) * self.f.apply(x)
            })
            .sum()
    }
}

#[derive(Debug)]
pub struct SpaceTimeDrift {
    pub memory: f64,
    pub tau: f64,
    pub coupling: f64,
    pub field: f64,
    pub link: BoundedFn,
    pub integrator: Integrator,
    pub nbhd: Neighborhood,
}

impl DriftFunctional for SpaceTimeDrift {
    fn name(&self) -> &str {
        "space_time"
    }
    fn neighborhood(&self) -> &Neighborhood {
        &self.nbhd
    }
    fn memory(&self) -> f64 {
        self.memory
    }
    fn bound(&self) -> f64 {
        self.link.sup() * self.integrator.variation_bound(self.memory)
    }
    fn evaluate(&self, _t: f64, w: &PathWindow<'_>) -> f64 {
        let c = w.center_slot();
        let dt = w.dt();
        let mut total = 0.0;
        for lag in 1..=w.integral_lags() {
            let s0 = w.time_at_lag(lag);
            let mut arg = 0.0;
            for s in 0..self.nbhd.len() {
                let x = w.value(s, lag).unwrap_or(0.0);
                arg += if s == c { self.field * x } else { self.coupling * x };
            }
            let dv = self.integrator.value(s0 + dt) - self.integrator.value(s0);
            let age = lag as f64 * dt;
            total += (-age / self.tau).exp() * self.link.apply(arg) * dv;
        }
        total
    }
}
