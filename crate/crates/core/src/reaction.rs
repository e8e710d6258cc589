//! Photosensitive two-variable Oregonator on a rectangular lattice.
//!
//! The medium is integrated with forward Euler and a five-point Laplacian:
//!
//! ```text
//! du/dt = (1/ε) (u - u² - (f v + Φ)(u - q)/(u + q)) + D_u ∇²u
//! dv/dt = u - v                                     (+ D_v ∇²v, zero by default)
//! ```
//!
//! Boundaries are zero-flux: the ghost value outside an edge equals the edge
//! value itself, so the discrete Laplacian sums to zero over the domain and
//! pure diffusion conserves total mass.
//!
//! Every step reads only the pre-step buffers (Jacobi update). Rows may be
//! processed in parallel; results do not depend on the worker count.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{Light, LightGrid};
use crate::error::{Error, Result};
use crate::gates::InitiationMask;
use crate::imaging::GridGeometry;

/// Dense row-major 2-D field of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Field2 {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Field2 {
    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", width * height),
                actual: format!("{} values", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &Field2) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Kinetic and discretisation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KineticParams {
    pub epsilon: f64,
    pub f: f64,
    pub q: f64,
    pub d_u: f64,
    pub d_v: f64,
    pub dt: f64,
    pub dx: f64,
    /// Floor u at zero after each step. Forward Euler at dt = 0.001 with
    /// q = 0.0002 otherwise steps u across the pole at u = -q on the back of
    /// every wave and diverges.
    pub clamp_negative_u: bool,
}

impl Default for KineticParams {
    fn default() -> Self {
        Self {
            epsilon: 0.11,
            f: 1.1,
            q: 0.0002,
            d_u: 1.0,
            d_v: 0.0,
            dt: 0.001,
            dx: 0.62,
            clamp_negative_u: true,
        }
    }
}

impl KineticParams {
    /// Largest `D·dt/dx²` accepted; explicit diffusion is unstable at 0.25 in 2-D.
    pub const STABILITY_LIMIT: f64 = 0.25;

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("q", self.q),
            ("dt", self.dt),
            ("dx", self.dx),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and > 0, got {value}"
                )));
            }
        }
        for (name, value) in [("f", self.f), ("d_u", self.d_u), ("d_v", self.d_v)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and >= 0, got {value}"
                )));
            }
        }
        for (name, d) in [("d_u", self.d_u), ("d_v", self.d_v)] {
            let ratio = d * self.dt / (self.dx * self.dx);
            if ratio >= Self::STABILITY_LIMIT {
                return Err(Error::InvalidParameter(format!(
                    "{name}*dt/dx^2 = {ratio} violates explicit Euler stability (< {})",
                    Self::STABILITY_LIMIT
                )));
            }
        }
        Ok(())
    }

    /// Right-hand sides of the point kinetics (no diffusion).
    #[inline]
    pub fn kinetics(&self, u: f64, v: f64, phi: f64) -> (f64, f64) {
        let du = (u - u * u - (self.f * v + phi) * (u - self.q) / (u + self.q)) / self.epsilon;
        (du, u - v)
    }
}

/// The three projected light intensities, as Φ values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LightLevels {
    pub high: f64,
    pub threshold: f64,
    pub low: f64,
}

impl Default for LightLevels {
    fn default() -> Self {
        Self {
            high: 0.093023,
            threshold: 0.04,
            low: 0.000876,
        }
    }
}

impl LightLevels {
    pub fn validate(&self) -> Result<()> {
        let ok = self.low.is_finite()
            && self.high.is_finite()
            && self.high > self.threshold
            && self.threshold > self.low
            && self.low >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "light levels must satisfy high > threshold > low >= 0, got {self:?}"
            )))
        }
    }

    pub fn phi(&self, light: Light) -> f64 {
        match light {
            Light::Low => self.low,
            Light::Threshold => self.threshold,
            Light::High => self.high,
        }
    }
}

/// Concentrations u, v and the excitability field Φ, all the same size.
#[derive(Clone, Debug, PartialEq)]
pub struct MediumState {
    u: Field2,
    v: Field2,
    phi: Field2,
}

impl MediumState {
    /// Dark, empty medium: u = v = Φ = 0.
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            u: Field2::filled(width, height, 0.0),
            v: Field2::filled(width, height, 0.0),
            phi: Field2::filled(width, height, 0.0),
        }
    }

    pub fn from_fields(u: Field2, v: Field2, phi: Field2) -> Result<Self> {
        if u.dims() != v.dims() {
            return Err(Error::dims(u.dims(), v.dims()));
        }
        if u.dims() != phi.dims() {
            return Err(Error::dims(u.dims(), phi.dims()));
        }
        if phi.as_slice().iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::InvalidParameter("phi must be >= 0 everywhere".into()));
        }
        Ok(Self { u, v, phi })
    }

    pub fn width(&self) -> usize {
        self.u.width
    }

    pub fn height(&self) -> usize {
        self.u.height
    }

    pub fn dims(&self) -> (usize, usize) {
        self.u.dims()
    }

    pub fn u(&self) -> &Field2 {
        &self.u
    }

    pub fn v(&self) -> &Field2 {
        &self.v
    }

    pub fn phi(&self) -> &Field2 {
        &self.phi
    }

    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u.data
    }

    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v.data
    }

    /// Mutable Φ. Values must stay non-negative.
    pub fn phi_mut(&mut self) -> &mut [f64] {
        &mut self.phi.data
    }

    pub(crate) fn phi_mut_field(&mut self) -> &mut Field2 {
        &mut self.phi
    }

    pub fn set_phi(&mut self, phi: Field2) -> Result<()> {
        if phi.dims() != self.dims() {
            return Err(Error::dims(self.dims(), phi.dims()));
        }
        self.phi = phi;
        Ok(())
    }
}

/// Which right-hand-side terms a step evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Terms {
    Full,
    /// Diffusion only, kinetics switched off. Used to check boundary conservation.
    DiffusionOnly,
}

/// Five-point Laplacian at `(x, y)` with zero-flux boundaries.
pub fn laplacian5(field: &Field2, x: usize, y: usize, dx: f64) -> f64 {
    let (w, h) = field.dims();
    let c = field.get(x, y);
    let left = field.get(x.saturating_sub(1), y);
    let right = field.get((x + 1).min(w - 1), y);
    let up = field.get(x, y.saturating_sub(1));
    let down = field.get(x, (y + 1).min(h - 1));
    (left + right + up + down - 4.0 * c) / (dx * dx)
}

/// One explicit Euler step; the input is left untouched.
pub fn step(state: &MediumState, params: &KineticParams) -> Result<MediumState> {
    step_terms(state, params, Terms::Full)
}

pub fn step_terms(state: &MediumState, params: &KineticParams, terms: Terms) -> Result<MediumState> {
    params.validate()?;
    let mut out = state.clone();
    let mut scratch = Scratch::for_state(state);
    advance(&mut out, &mut scratch, params, terms, 1)?;
    Ok(out)
}

/// Writes the light grid's Φ values into the CA region of `phi`.
pub fn rasterize_light(
    phi: &mut Field2,
    light: &LightGrid,
    geometry: &GridGeometry,
    levels: &LightLevels,
) -> Result<()> {
    geometry.check_fits(phi.width(), phi.height())?;
    if light.len() != geometry.cells() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} light actions", geometry.cells()),
            actual: format!("{}", light.len()),
        });
    }
    let width = phi.width();
    for (cell, action) in light.actions().iter().enumerate() {
        let value = levels.phi(*action);
        let (x0, y0, x1, y1) = geometry.cell_bounds(cell);
        for y in y0..y1 {
            phi.data[y * width + x0..y * width + x1].fill(value);
        }
    }
    Ok(())
}

/// Projects `light` onto the medium and integrates `n_iter` steps.
pub fn run_epoch(
    mut state: MediumState,
    light: &LightGrid,
    geometry: &GridGeometry,
    levels: &LightLevels,
    params: &KineticParams,
    n_iter: u64,
) -> Result<MediumState> {
    params.validate()?;
    rasterize_light(&mut state.phi, light, geometry, levels)?;
    let mut scratch = Scratch::for_state(&state);
    advance(&mut state, &mut scratch, params, Terms::Full, n_iter)?;
    Ok(state)
}

/// Applies the input-dependent initiation pattern and integrates `n_iter` steps.
pub fn initiate_waves(
    mut state: MediumState,
    mask: &InitiationMask,
    input_bits: (bool, bool),
    levels: &LightLevels,
    params: &KineticParams,
    n_iter: u64,
) -> Result<MediumState> {
    params.validate()?;
    let phi = mask.encode_input(input_bits, levels);
    state.set_phi(phi)?;
    let mut scratch = Scratch::for_state(&state);
    advance(&mut state, &mut scratch, params, Terms::Full, n_iter)?;
    Ok(state)
}

/// Reusable back buffers for repeated stepping.
#[derive(Debug, Default)]
pub struct Scratch {
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Scratch {
    pub fn for_state(state: &MediumState) -> Self {
        let n = state.width() * state.height();
        Self {
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Integrates `n` steps in place, ping-ponging through `scratch`.
pub fn advance(
    state: &mut MediumState,
    scratch: &mut Scratch,
    params: &KineticParams,
    terms: Terms,
    n: u64,
) -> Result<()> {
    let cells = state.width() * state.height();
    scratch.u.resize(cells, 0.0);
    scratch.v.resize(cells, 0.0);
    let coeffs = Coeffs::new(params, terms);
    for i in 0..n {
        let finite = step_buffers(state, &mut scratch.u, &mut scratch.v, &coeffs);
        std::mem::swap(&mut state.u.data, &mut scratch.u);
        std::mem::swap(&mut state.v.data, &mut scratch.v);
        if !finite {
            return Err(Error::NumericalBlowup { step: i + 1 });
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
struct Coeffs {
    dt: f64,
    inv_eps: f64,
    f: f64,
    q: f64,
    d_u: f64,
    d_v: f64,
    inv_dx2: f64,
    kinetics: bool,
    clamp: bool,
}

impl Coeffs {
    fn new(p: &KineticParams, terms: Terms) -> Self {
        Self {
            dt: p.dt,
            inv_eps: 1.0 / p.epsilon,
            f: p.f,
            q: p.q,
            d_u: p.d_u,
            d_v: p.d_v,
            inv_dx2: 1.0 / (p.dx * p.dx),
            kinetics: terms == Terms::Full,
            clamp: p.clamp_negative_u,
        }
    }
}

/// Rows per parallel work item.
const BAND_ROWS: usize = 16;

fn step_buffers(state: &MediumState, u_out: &mut [f64], v_out: &mut [f64], k: &Coeffs) -> bool {
    let (w, h) = state.dims();
    let u = state.u.as_slice();
    let v = state.v.as_slice();
    let phi = state.phi.as_slice();
    let band = w * BAND_ROWS;
    u_out
        .par_chunks_mut(band)
        .zip(v_out.par_chunks_mut(band))
        .enumerate()
        .map(|(b, (uo, vo))| {
            let mut acc = 0.0;
            for (r, (uo_row, vo_row)) in uo.chunks_mut(w).zip(vo.chunks_mut(w)).enumerate() {
                let y = b * BAND_ROWS + r;
                let ym = y.saturating_sub(1);
                let yp = (y + 1).min(h - 1);
                let rows = Rows {
                    u_mid: &u[y * w..(y + 1) * w],
                    u_up: &u[ym * w..(ym + 1) * w],
                    u_down: &u[yp * w..(yp + 1) * w],
                    v_mid: &v[y * w..(y + 1) * w],
                    v_up: &v[ym * w..(ym + 1) * w],
                    v_down: &v[yp * w..(yp + 1) * w],
                    phi: &phi[y * w..(y + 1) * w],
                };
                acc += dispatch_row(&rows, uo_row, vo_row, k);
            }
            acc.is_finite()
        })
        .reduce(|| true, |a, b| a && b)
}

struct Rows<'a> {
    u_mid: &'a [f64],
    u_up: &'a [f64],
    u_down: &'a [f64],
    v_mid: &'a [f64],
    v_up: &'a [f64],
    v_down: &'a [f64],
    phi: &'a [f64],
}

#[inline]
fn dispatch_row(r: &Rows, u_out: &mut [f64], v_out: &mut [f64], k: &Coeffs) -> f64 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: as below, for AVX-512F.
            return unsafe { row_kernel_avx512(r, u_out, v_out, k) };
        }
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the CPU supports AVX2. No FMA contraction happens, so the
            // arithmetic is bit-identical to the portable path.
            return unsafe { row_kernel_avx2(r, u_out, v_out, k) };
        }
    }
    row_kernel(r, u_out, v_out, k)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn row_kernel_avx2(r: &Rows, u_out: &mut [f64], v_out: &mut [f64], k: &Coeffs) -> f64 {
    row_kernel(r, u_out, v_out, k)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f")]
unsafe fn row_kernel_avx512(r: &Rows, u_out: &mut [f64], v_out: &mut [f64], k: &Coeffs) -> f64 {
    row_kernel(r, u_out, v_out, k)
}

/// Updates one row; returns 0.0 if every new value is finite, NaN otherwise.
#[inline(always)]
fn row_kernel(r: &Rows, u_out: &mut [f64], v_out: &mut [f64], k: &Coeffs) -> f64 {
    let w = r.u_mid.len();
    if w < 3 {
        return (0..w).map(|x| point(r, x, x.saturating_sub(1), (x + 1).min(w - 1), u_out, v_out, k)).sum();
    }
    let mut acc = point(r, 0, 0, 1, u_out, v_out, k);
    acc += match (k.kinetics, k.d_v != 0.0) {
        (true, false) => interior::<true, false>(r, u_out, v_out, k),
        (true, true) => interior::<true, true>(r, u_out, v_out, k),
        (false, false) => interior::<false, false>(r, u_out, v_out, k),
        (false, true) => interior::<false, true>(r, u_out, v_out, k),
    };
    acc + point(r, w - 1, w - 2, w - 1, u_out, v_out, k)
}

#[inline(always)]
fn update<const KINETICS: bool, const DIFFUSE_V: bool>(
    c: f64,
    cv: f64,
    phi: f64,
    neighbors_u: f64,
    neighbors_v: f64,
    k: &Coeffs,
) -> (f64, f64) {
    let lap_u = (neighbors_u - 4.0 * c) * k.inv_dx2;
    let mut du = k.d_u * lap_u;
    let mut dv = 0.0;
    if KINETICS {
        du += (c - c * c - (k.f * cv + phi) * (c - k.q) / (c + k.q)) * k.inv_eps;
        dv = c - cv;
    }
    if DIFFUSE_V {
        dv += k.d_v * ((neighbors_v - 4.0 * cv) * k.inv_dx2);
    }
    let mut un = c + k.dt * du;
    // NaN must survive the floor so blow-ups are reported.
    if k.clamp && un < 0.0 {
        un = 0.0;
    }
    (un, cv + k.dt * dv)
}

#[inline(always)]
fn interior<const KINETICS: bool, const DIFFUSE_V: bool>(
    r: &Rows,
    u_out: &mut [f64],
    v_out: &mut [f64],
    k: &Coeffs,
) -> f64 {
    let w = r.u_mid.len();
    let (um, uu, ud) = (r.u_mid, &r.u_up[1..w - 1], &r.u_down[1..w - 1]);
    let (vm, vu, vd) = (r.v_mid, &r.v_up[1..w - 1], &r.v_down[1..w - 1]);
    let phi = &r.phi[1..w - 1];
    let uo = &mut u_out[1..w - 1];
    let vo = &mut v_out[1..w - 1];
    for i in 0..w - 2 {
        let c = um[i + 1];
        let nu = um[i] + um[i + 2] + uu[i] + ud[i];
        let nv = if DIFFUSE_V { vm[i] + vm[i + 2] + vu[i] + vd[i] } else { 0.0 };
        let (un, vn) = update::<KINETICS, DIFFUSE_V>(c, vm[i + 1], phi[i], nu, nv, k);
        uo[i] = un;
        vo[i] = vn;
    }
    finite_sum(uo) + finite_sum(vo)
}

/// 0.0 when every value is finite, NaN otherwise.
#[inline(always)]
fn finite_sum(values: &[f64]) -> f64 {
    if values.iter().fold(true, |ok, x| ok & x.is_finite()) {
        0.0
    } else {
        f64::NAN
    }
}

#[inline(always)]
fn point(r: &Rows, x: usize, xm: usize, xp: usize, u_out: &mut [f64], v_out: &mut [f64], k: &Coeffs) -> f64 {
    let nu = r.u_mid[xm] + r.u_mid[xp] + r.u_up[x] + r.u_down[x];
    let nv = r.v_mid[xm] + r.v_mid[xp] + r.v_up[x] + r.v_down[x];
    let (un, vn) = match (k.kinetics, k.d_v != 0.0) {
        (true, false) => update::<true, false>(r.u_mid[x], r.v_mid[x], r.phi[x], nu, nv, k),
        (true, true) => update::<true, true>(r.u_mid[x], r.v_mid[x], r.phi[x], nu, nv, k),
        (false, false) => update::<false, false>(r.u_mid[x], r.v_mid[x], r.phi[x], nu, nv, k),
        (false, true) => update::<false, true>(r.u_mid[x], r.v_mid[x], r.phi[x], nu, nv, k),
    };
    u_out[x] = un;
    v_out[x] = vn;
    un + vn
}
