//! Two-channel wavelet filter banks.
//!
//! Two parameterizations are supported:
//!
//! * [`LatticeFilterBank`]: rotation angles of an orthogonal lattice. Any
//!   angle vector expands to an orthonormal filter pair, so training the
//!   angles can never leave the perfect-reconstruction set.
//! * [`CoefficientFilterBank`]: free low-pass taps `h0`, with the high-pass
//!   filter always derived by alias cancellation. Orthogonality is only
//!   encouraged, through the half-band penalty [`pr_loss`].
//!
//! A lattice with `K + 1` angles expands to filters of `2K + 2` taps. The
//! expansion is
//!
//! ```text
//! [H0(z); H1(z)] = diag(1, -1) R_K Λ(z²) ... R_1 Λ(z²) R_0 [1; z⁻¹]
//! R_k = [[cos θ_k, sin θ_k], [-sin θ_k, cos θ_k]],  Λ(z) = diag(1, z⁻¹)
//! ```

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use crate::error::{invalid, Result, TwuError};

/// Haar low-pass taps.
pub const HAAR: [f64; 2] = [FRAC_1_SQRT_2, FRAC_1_SQRT_2];

/// Daubechies 4-tap (two vanishing moments) low-pass taps.
pub const DB2: [f64; 4] = [
    0.482_962_913_144_534_16,
    0.836_516_303_737_807_9,
    0.224_143_868_042_013_4,
    -0.129_409_522_551_260_4,
];

/// Daubechies 6-tap low-pass taps.
pub const DB3: [f64; 6] = [
    0.332_670_552_950_082_6,
    0.806_891_509_311_092_4,
    0.459_877_502_118_491_5,
    -0.135_011_020_010_254_6,
    -0.085_441_273_882_026_69,
    0.035_226_291_885_709_53,
];

/// Daubechies 8-tap low-pass taps.
pub const DB4: [f64; 8] = [
    0.230_377_813_308_896_45,
    0.714_846_570_552_915_6,
    0.630_880_767_929_859,
    -0.027_983_769_416_859_59,
    -0.187_034_811_719_093_06,
    0.030_841_381_835_560_63,
    0.032_883_011_666_885_18,
    -0.010_597_401_785_069_02,
];

/// Tap counts with a Daubechies reference filter.
pub const SUPPORTED_TAPS: [usize; 4] = [2, 4, 6, 8];

/// Reference low-pass taps for 2 (Haar), 4, 6 or 8 taps.
pub fn daubechies_lowpass(taps: usize) -> Result<&'static [f64]> {
    match taps {
        2 => Ok(&HAAR),
        4 => Ok(&DB2),
        6 => Ok(&DB3),
        8 => Ok(&DB4),
        other => Err(invalid(format!(
            "unsupported tap count {other}, expected one of 2, 4, 6, 8"
        ))),
    }
}

fn check_even_taps(len: usize) -> Result<()> {
    if len < 2 || len % 2 != 0 {
        return Err(invalid(format!(
            "filter length must be even and at least 2, got {len}"
        )));
    }
    Ok(())
}

/// Alias-cancelling high-pass filter: `h1(n) = (-1)^n h0(N-1-n)`.
pub fn highpass_from_lowpass(h0: &[f64]) -> Result<Vec<f64>> {
    check_even_taps(h0.len())?;
    let n = h0.len();
    Ok((0..n)
        .map(|i| {
            let v = h0[n - 1 - i];
            if i % 2 == 0 {
                v
            } else {
                -v
            }
        })
        .collect())
}

/// Double-shift autocorrelation `Σ_n h(n) h(n + 2l)`.
fn double_shift_corr(h0: &[f64], l: usize) -> f64 {
    let shift = 2 * l;
    if shift >= h0.len() {
        return 0.0;
    }
    h0.iter()
        .zip(&h0[shift..])
        .map(|(a, b)| a * b)
        .sum()
}

/// Half-band penalty of a low-pass filter.
///
/// `|1 - Σ h(n)²|² + Σ_{l=1..N/2} (Σ_n h(n) h(n+2l))²`, where the inner sum
/// runs over every `n` with both `n` and `n + 2l` inside `0..N`. Zero exactly
/// when `h0` has unit energy and is orthogonal to its even shifts.
pub fn pr_loss(h0: &[f64]) -> Result<f64> {
    check_even_taps(h0.len())?;
    let energy: f64 = h0.iter().map(|v| v * v).sum();
    let mut loss = (1.0 - energy).powi(2);
    for l in 1..=h0.len() / 2 {
        loss += double_shift_corr(h0, l).powi(2);
    }
    Ok(loss)
}

/// Analytic gradient of [`pr_loss`] with respect to each tap of `h0`.
pub fn pr_loss_grad(h0: &[f64]) -> Result<Vec<f64>> {
    check_even_taps(h0.len())?;
    let n = h0.len();
    let energy: f64 = h0.iter().map(|v| v * v).sum();
    let mut grad: Vec<f64> = h0.iter().map(|&h| -4.0 * (1.0 - energy) * h).collect();
    for l in 1..=n / 2 {
        let shift = 2 * l;
        if shift >= n {
            break;
        }
        let r = double_shift_corr(h0, l);
        for i in 0..n - shift {
            grad[i] += 2.0 * r * h0[i + shift];
            grad[i + shift] += 2.0 * r * h0[i];
        }
    }
    Ok(grad)
}

/// Magnitude response `|H(e^{jω})|` of a tap vector.
pub fn magnitude_response(taps: &[f64], omega: f64) -> f64 {
    let (re, im) = taps
        .iter()
        .enumerate()
        .fold((0.0, 0.0), |(re, im), (n, &h)| {
            let phase = omega * n as f64;
            (re + h * phase.cos(), im - h * phase.sin())
        });
    re.hypot(im)
}

/// A low-pass/high-pass pair related by alias cancellation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientFilterBank {
    h0: Vec<f64>,
    h1: Vec<f64>,
}

impl CoefficientFilterBank {
    /// Builds the bank from free low-pass taps; `h1` is always derived.
    pub fn from_lowpass(h0: Vec<f64>) -> Result<Self> {
        if h0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("filter taps must be finite"));
        }
        let h1 = highpass_from_lowpass(&h0)?;
        Ok(Self { h0, h1 })
    }

    pub fn lowpass(&self) -> &[f64] {
        &self.h0
    }

    pub fn highpass(&self) -> &[f64] {
        &self.h1
    }

    pub fn tap_count(&self) -> usize {
        self.h0.len()
    }

    pub fn pr_loss(&self) -> f64 {
        // length was validated at construction
        pr_loss(&self.h0).unwrap_or(f64::NAN)
    }

    pub(crate) fn from_parts_unchecked(h0: Vec<f64>, h1: Vec<f64>) -> Self {
        Self { h0, h1 }
    }
}

/// Orthogonal lattice filter bank parameterized by rotation angles.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFilterBank {
    angles: Vec<f64>,
}

impl LatticeFilterBank {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(invalid("lattice needs at least one rotation angle"));
        }
        if angles.iter().any(|a| !a.is_finite()) {
            return Err(invalid("lattice angles must be finite"));
        }
        Ok(Self { angles })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Number of delay stages `K`.
    pub fn stages(&self) -> usize {
        self.angles.len() - 1
    }

    /// Filter length `2K + 2`.
    pub fn tap_count(&self) -> usize {
        2 * self.angles.len()
    }

    pub fn filters(&self) -> CoefficientFilterBank {
        lattice_to_filters(self)
    }

    pub fn jacobian(&self) -> FilterJacobian {
        filters_jacobian(self)
    }
}

// Applies R(θ) to the polynomial pair (p0, p1) in place.
fn rotate(p0: &mut [f64], p1: &mut [f64], c: f64, s: f64) {
    for (a, b) in p0.iter_mut().zip(p1.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x + s * y;
        *b = -s * x + c * y;
    }
}

// Multiplies p1 by z⁻² in a buffer of fixed final length.
fn delay2(p1: &mut [f64], used: usize) {
    for i in (0..used).rev() {
        p1[i + 2] = p1[i];
    }
    p1[0] = 0.0;
    p1[1] = 0.0;
}

/// Expands lattice angles into filter taps.
pub fn lattice_to_filters(bank: &LatticeFilterBank) -> CoefficientFilterBank {
    let taps = bank.tap_count();
    let mut p0 = vec![0.0; taps];
    let mut p1 = vec![0.0; taps];
    p0[0] = 1.0;
    p1[1] = 1.0;
    for (k, &theta) in bank.angles.iter().enumerate() {
        if k > 0 {
            delay2(&mut p1, 2 * k);
        }
        let used = 2 * k + 2;
        rotate(&mut p0[..used], &mut p1[..used], theta.cos(), theta.sin());
    }
    let h1 = p1.into_iter().map(|v| -v).collect();
    CoefficientFilterBank::from_parts_unchecked(p0, h1)
}

/// Derivatives of every tap with respect to every lattice angle.
///
/// `d_h0[k][n]` is `∂h0(n)/∂θ_k`; likewise for `d_h1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterJacobian {
    pub d_h0: Vec<Vec<f64>>,
    pub d_h1: Vec<Vec<f64>>,
}

impl FilterJacobian {
    /// Chain rule: maps tap-space gradients into angle space.
    pub fn pullback(&self, grad_h0: &[f64], grad_h1: &[f64]) -> Vec<f64> {
        self.d_h0
            .iter()
            .zip(&self.d_h1)
            .map(|(row0, row1)| {
                let a: f64 = row0.iter().zip(grad_h0).map(|(d, g)| d * g).sum();
                let b: f64 = row1.iter().zip(grad_h1).map(|(d, g)| d * g).sum();
                a + b
            })
            .collect()
    }
}

/// Analytic Jacobian of [`lattice_to_filters`] by forward-mode propagation
/// through the rotation/delay product.
pub fn filters_jacobian(bank: &LatticeFilterBank) -> FilterJacobian {
    let taps = bank.tap_count();
    let n_angles = bank.angles.len();
    let mut p0 = vec![0.0; taps];
    let mut p1 = vec![0.0; taps];
    p0[0] = 1.0;
    p1[1] = 1.0;
    let mut d0 = vec![vec![0.0; taps]; n_angles];
    let mut d1 = vec![vec![0.0; taps]; n_angles];

    for (k, &theta) in bank.angles.iter().enumerate() {
        let used = 2 * k + 2;
        if k > 0 {
            delay2(&mut p1, 2 * k);
            for d in d1.iter_mut().take(k) {
                delay2(d, 2 * k);
            }
        }
        let (c, s) = (theta.cos(), theta.sin());
        for j in 0..k {
            rotate(&mut d0[j][..used], &mut d1[j][..used], c, s);
        }
        // dR/dθ = [[-s, c], [-c, -s]] applied to the pre-rotation pair
        for i in 0..used {
            d0[k][i] = -s * p0[i] + c * p1[i];
            d1[k][i] = -c * p0[i] - s * p1[i];
        }
        rotate(&mut p0[..used], &mut p1[..used], c, s);
    }
    for row in d1.iter_mut() {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
    FilterJacobian { d_h0: d0, d_h1: d1 }
}

/// Result of fitting lattice angles to a target low-pass filter.
#[derive(Debug, Clone)]
pub struct LatticeFit {
    pub bank: LatticeFilterBank,
    /// Largest absolute tap difference between expansion and target.
    pub max_residual: f64,
}

/// Least-squares fit of lattice angles to target low-pass taps.
///
/// The starting point comes from peeling one rotation stage at a time off the
/// target (exact for orthonormal targets); Gauss-Newton iterations then
/// minimize the tap residual.
pub fn fit_lattice_angles(target: &[f64]) -> Result<LatticeFit> {
    check_even_taps(target.len())?;
    if target.iter().any(|v| !v.is_finite()) {
        return Err(invalid("target taps must be finite"));
    }
    let mut angles = peel_angles(target);
    let residual = |angles: &[f64]| -> Vec<f64> {
        let bank = LatticeFilterBank {
            angles: angles.to_vec(),
        };
        lattice_to_filters(&bank)
            .h0
            .iter()
            .zip(target)
            .map(|(a, b)| a - b)
            .collect()
    };

    let mut r = residual(&angles);
    let mut cost: f64 = r.iter().map(|v| v * v).sum();
    let mut damping = 1e-9;
    for _ in 0..200 {
        if cost < 1e-30 {
            break;
        }
        let bank = LatticeFilterBank {
            angles: angles.clone(),
        };
        let jac = filters_jacobian(&bank);
        let m = angles.len();
        // normal equations (JᵀJ + λI) δ = -Jᵀr
        let mut jtj = vec![vec![0.0; m]; m];
        let mut jtr = vec![0.0; m];
        for a in 0..m {
            for b in 0..m {
                jtj[a][b] = jac.d_h0[a].iter().zip(&jac.d_h0[b]).map(|(x, y)| x * y).sum();
            }
            jtr[a] = jac.d_h0[a].iter().zip(&r).map(|(x, y)| x * y).sum();
        }
        let mut improved = false;
        for _ in 0..20 {
            let mut system = jtj.clone();
            for (a, row) in system.iter_mut().enumerate() {
                row[a] += damping;
            }
            let rhs: Vec<f64> = jtr.iter().map(|v| -v).collect();
            let Some(step) = solve_dense(system, rhs) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = angles.iter().zip(&step).map(|(a, d)| a + d).collect();
            let r_trial = residual(&trial);
            let c_trial: f64 = r_trial.iter().map(|v| v * v).sum();
            if c_trial < cost {
                angles = trial;
                r = r_trial;
                cost = c_trial;
                damping = (damping * 0.1).max(1e-15);
                improved = true;
                break;
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let max_residual = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Ok(LatticeFit {
        bank: LatticeFilterBank { angles },
        max_residual,
    })
}

// Undo the lattice one stage at a time, choosing each rotation so that the
// leading coefficient of the second channel vanishes.
fn peel_angles(target: &[f64]) -> Vec<f64> {
    let taps = target.len();
    let stages = taps / 2 - 1;
    let h1 = highpass_from_lowpass(target).expect("length checked by caller");
    let mut a = target.to_vec();
    let mut b: Vec<f64> = h1.into_iter().map(|v| -v).collect();
    let mut angles = vec![0.0; stages + 1];
    for k in (0..=stages).rev() {
        let theta = (-b[0]).atan2(a[0]);
        let (c, s) = (theta.cos(), theta.sin());
        // apply Rᵀ
        for (x, y) in a.iter_mut().zip(b.iter_mut()) {
            let (u, v) = (*x, *y);
            *x = c * u - s * v;
            *y = s * u + c * v;
        }
        angles[k] = theta;
        if k > 0 {
            a.truncate(a.len() - 2);
            b.drain(..2);
        }
    }
    angles
}

// Gaussian elimination with partial pivoting; None when singular.
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..n {
            let f = m[row][col] / m[col][col];
            for c in col..n {
                m[row][c] -= f * m[col][c];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|c| m[row][c] * x[c]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Some(x)
}

/// Parameterization of a tunable bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BankMode {
    /// Orthogonal lattice angles.
    Lattice,
    /// Free low-pass taps with a half-band penalty.
    Free,
}

impl fmt::Display for BankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BankMode::Lattice => "lattice",
            BankMode::Free => "free",
        })
    }
}

impl FromStr for BankMode {
    type Err = TwuError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lattice" | "orthlatt" => Ok(BankMode::Lattice),
            "free" | "pr-relax" => Ok(BankMode::Free),
            other => Err(invalid(format!("unknown bank mode '{other}'"))),
        }
    }
}

/// Either parameterization of a tunable filter bank.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterBank {
    Lattice(LatticeFilterBank),
    Free(CoefficientFilterBank),
}

impl FilterBank {
    pub fn mode(&self) -> BankMode {
        match self {
            FilterBank::Lattice(_) => BankMode::Lattice,
            FilterBank::Free(_) => BankMode::Free,
        }
    }

    pub fn tap_count(&self) -> usize {
        match self {
            FilterBank::Lattice(b) => b.tap_count(),
            FilterBank::Free(b) => b.tap_count(),
        }
    }

    /// Effective analysis filters.
    pub fn filters(&self) -> CoefficientFilterBank {
        match self {
            FilterBank::Lattice(b) => b.filters(),
            FilterBank::Free(b) => b.clone(),
        }
    }

    /// Trainable parameters: angles for a lattice, `h0` taps otherwise.
    pub fn params(&self) -> &[f64] {
        match self {
            FilterBank::Lattice(b) => b.angles(),
            FilterBank::Free(b) => b.lowpass(),
        }
    }

    /// Rebuilds the bank with new trainable parameters of the same length.
    pub fn with_params(&self, params: Vec<f64>) -> Result<Self> {
        if params.len() != self.params().len() {
            return Err(invalid(format!(
                "expected {} bank parameters, got {}",
                self.params().len(),
                params.len()
            )));
        }
        Ok(match self {
            FilterBank::Lattice(_) => FilterBank::Lattice(LatticeFilterBank::new(params)?),
            FilterBank::Free(_) => FilterBank::Free(CoefficientFilterBank::from_lowpass(params)?),
        })
    }

    /// Maps gradients on `(h0, h1)` to gradients on [`FilterBank::params`].
    ///
    /// In free mode `h1` is a signed reversal of `h0`, so its gradient is
    /// folded back onto `h0`.
    pub fn pullback(&self, grad_h0: &[f64], grad_h1: &[f64]) -> Vec<f64> {
        match self {
            FilterBank::Lattice(b) => b.jacobian().pullback(grad_h0, grad_h1),
            FilterBank::Free(_) => {
                let n = grad_h0.len();
                (0..n)
                    .map(|m| {
                        // h1(i) = (-1)^i h0(n-1-i), so h0(m) feeds h1(n-1-m)
                        let i = n - 1 - m;
                        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                        grad_h0[m] + sign * grad_h1[i]
                    })
                    .collect()
            }
        }
    }

    /// Plain-text key-value form.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        match self {
            FilterBank::Lattice(b) => format!(
                "mode=lattice\ntaps={}\nangles={}\n",
                b.tap_count(),
                join(b.angles())
            ),
            FilterBank::Free(b) => format!(
                "mode=free\ntaps={}\nh0={}\n",
                b.tap_count(),
                join(b.lowpass())
            ),
        }
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut mode = None;
        let mut taps = None;
        let mut values = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| invalid(format!("malformed line '{line}'")))?;
            match key.trim() {
                "mode" => mode = Some(value.trim().parse::<BankMode>()?),
                "taps" => {
                    taps = Some(
                        value
                            .trim()
                            .parse::<usize>()
                            .map_err(|e| invalid(format!("bad taps: {e}")))?,
                    )
                }
                k @ ("angles" | "h0") => {
                    let parsed = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| invalid(format!("bad {k} value: {e}")))?;
                    values = Some((k.to_string(), parsed));
                }
                other => return Err(invalid(format!("unknown key '{other}'"))),
            }
        }
        let mode = mode.ok_or_else(|| invalid("missing 'mode'"))?;
        let (key, values) = values.ok_or_else(|| invalid("missing 'angles' or 'h0'"))?;
        let bank = match (mode, key.as_str()) {
            (BankMode::Lattice, "angles") => FilterBank::Lattice(LatticeFilterBank::new(values)?),
            (BankMode::Free, "h0") => FilterBank::Free(CoefficientFilterBank::from_lowpass(values)?),
            _ => return Err(invalid(format!("key '{key}' does not match mode {mode}"))),
        };
        if let Some(t) = taps {
            if t != bank.tap_count() {
                return Err(invalid(format!(
                    "declared {t} taps but parameters give {}",
                    bank.tap_count()
                )));
            }
        }
        Ok(bank)
    }
}

/// Bank initialized to the Haar/Daubechies filter of the given length.
///
/// Lattice mode fits angles to the reference taps; the fit must reproduce
/// them within 1e-8.
pub fn init_filter_bank(taps: usize, mode: BankMode) -> Result<FilterBank> {
    let reference = daubechies_lowpass(taps)?;
    match mode {
        BankMode::Free => Ok(FilterBank::Free(CoefficientFilterBank::from_lowpass(
            reference.to_vec(),
        )?)),
        BankMode::Lattice => {
            let fit = fit_lattice_angles(reference)?;
            if fit.max_residual > 1e-8 {
                return Err(invalid(format!(
                    "lattice fit for {taps} taps left residual {:e}",
                    fit.max_residual
                )));
            }
            Ok(FilterBank::Lattice(fit.bank))
        }
    }
}
