//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use bz_logic::controller::{Light, MemoryMode};
use bz_logic::imaging::{diff_threshold, render, RenderBounds};
use bz_logic::reaction::{advance, Field2, KineticParams, MediumState, Scratch, Terms};

/// Lookup key from grid coordinates: self bit, then the in-range
/// neighbours scanned row by row, then the previous-cycle bit.
pub fn key_oracle(rows: usize, cols: usize, cell: usize, bits: &[bool], prev: Option<&[bool]>) -> usize {
    let (r, c) = ((cell / cols) as i64, (cell % cols) as i64);
    let mut inputs = vec![bits[cell]];
    for nr in r - 1..=r + 1 {
        for nc in c - 1..=c + 1 {
            if (nr, nc) != (r, c) && nr >= 0 && nc >= 0 && nr < rows as i64 && nc < cols as i64 {
                inputs.push(bits[(nr * cols as i64 + nc) as usize]);
            }
        }
    }
    if let Some(p) = prev {
        inputs.push(p[cell]);
    }
    inputs.iter().enumerate().map(|(i, b)| (*b as usize) << i).sum()
}

/// Replays one presentation's grid states and returns the `(cell, key)`
/// pairs a controller in `mode` looks up.
pub fn visited_oracle(rows: usize, cols: usize, mode: MemoryMode, states: &[Vec<bool>]) -> Vec<(usize, usize)> {
    let n = rows * cols;
    let mut prev = vec![false; n];
    let mut m = vec![0.5f64; n];
    let mut out = Vec::new();
    for s in states {
        let eff: Vec<bool> = match mode {
            MemoryMode::WidrowHoff => m.iter().map(|x| *x > 0.5).collect(),
            _ => s.clone(),
        };
        for cell in 0..n {
            let p = (mode == MemoryMode::Explicit).then_some(&prev[..]);
            out.push((cell, key_oracle(rows, cols, cell, &eff, p)));
        }
        prev = s.clone();
        for (mi, b) in m.iter_mut().zip(s) {
            *mi += 0.2 * (if *b { 1.0 } else { 0.0 } - *mi);
        }
    }
    out
}

pub fn trit_light(t: u8) -> Light {
    Light::from_trit(t).unwrap()
}

/// Laplacian through a padded copy whose ghost ring repeats the edge.
pub fn ghost_laplacian(f: &Field2, dx: f64) -> Vec<f64> {
    let (w, h) = f.dims();
    let pw = w + 2;
    let mut pad = vec![0.0; pw * (h + 2)];
    for py in 0..h + 2 {
        for px in 0..pw {
            let x = (px as isize - 1).clamp(0, w as isize - 1) as usize;
            let y = (py as isize - 1).clamp(0, h as isize - 1) as usize;
            pad[py * pw + px] = f.get(x, y);
        }
    }
    let at = |x: usize, y: usize| pad[y * pw + x];
    let mut out = Vec::with_capacity(w * h);
    for y in 1..=h {
        for x in 1..=w {
            out.push((at(x - 1, y) + at(x + 1, y) + at(x, y - 1) + at(x, y + 1) - 4.0 * at(x, y)) / (dx * dx));
        }
    }
    out
}

/// One Euler step straight from the model equations, u floored at zero.
pub fn reference_step(s: &MediumState, p: &KineticParams) -> (Vec<f64>, Vec<f64>) {
    let lap_u = ghost_laplacian(s.u(), p.dx);
    let lap_v = ghost_laplacian(s.v(), p.dx);
    let n = s.u().as_slice().len();
    let mut u_new = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    for i in 0..n {
        let (u, v, phi) = (s.u().as_slice()[i], s.v().as_slice()[i], s.phi().as_slice()[i]);
        let du = (u - u * u - (p.f * v + phi) * (u - p.q) / (u + p.q)) / p.epsilon + p.d_u * lap_u[i];
        u_new[i] = (u + p.dt * du).max(0.0);
        v_new[i] = v + p.dt * (u - v + p.d_v * lap_v[i]);
    }
    (u_new, v_new)
}

/// Planar fragment: an excited strip `2 * half` wide and `rows` tall on the
/// bottom edge, so it can only travel upwards, aged for `warm` steps under
/// `warm_phi`. Returns the white-pixel area of each following epoch's
/// difference image under uniform `phi`.
pub fn fragment_areas_with(
    phi: f64,
    epochs: usize,
    rows: usize,
    u0: f64,
    warm_phi: f64,
    warm: u64,
    half: usize,
) -> Vec<usize> {
    let (w, h) = (200, 200);
    let mut u = Field2::filled(w, h, 0.0);
    let v = Field2::filled(w, h, 0.0);
    for y in h - rows..h {
        for x in 100 - half..100 + half {
            u.set(x, y, u0);
        }
    }
    let mut s = MediumState::from_fields(u, v, Field2::filled(w, h, warm_phi)).unwrap();
    let p = KineticParams::default();
    let b = RenderBounds::default();
    let mut scratch = Scratch::for_state(&s);
    advance(&mut s, &mut scratch, &p, Terms::Full, warm).unwrap();
    s.set_phi(Field2::filled(w, h, phi)).unwrap();
    let mut prev = render(&s, &b);
    let mut areas = Vec::new();
    for _ in 0..epochs {
        advance(&mut s, &mut scratch, &p, Terms::Full, 600).unwrap();
        let cur = render(&s, &b);
        areas.push(diff_threshold(&prev, &cur).unwrap().white_count());
        prev = cur;
    }
    areas
}

/// The standard fragment: 3 rows by 120 points, aged four epochs at the
/// threshold light level.
pub fn fragment_areas(phi: f64, epochs: usize) -> Vec<usize> {
    fragment_areas_with(phi, epochs, 3, 0.9, 0.04, 2400, 60)
}
