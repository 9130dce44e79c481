//! Problem specification and the lifted design every solver works on.
//!
//! A [`Design`] folds the intercept handling into the matrix: an optional
//! leading column of ones, a shifted response for the proxy penalty, and the
//! penalty matrix `Q_pen` so that the LTS objective always reads
//! `sum_{z_i = 0} (y_i - a_i'x)^2 + x' Q_pen x`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{factor_spd, min_eig_sym, weighted_gram};
use crate::standardize::StandardizedInstance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterceptMode {
    /// Intercept fixed at zero (the response is already centered).
    Zero,
    /// Intercept penalized by `lambda * (x0 - c0)^2`. `None` takes `c0` from
    /// the ls+l2 fit with a free intercept.
    Proxy(Option<f64>),
    /// Unpenalized intercept; requires reliable rows to make `Q_reg` definite.
    Reliable,
}

impl FromStr for InterceptMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(InterceptMode::Zero),
            "proxy" => Ok(InterceptMode::Proxy(None)),
            "reliable" => Ok(InterceptMode::Reliable),
            _ => Err(Error::InvalidInput(format!("unknown intercept mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    BigM,
    Conic,
    ConicPlus,
    AltOpt,
    Lad,
    LsL2,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::BigM,
        Method::Conic,
        Method::ConicPlus,
        Method::AltOpt,
        Method::Lad,
        Method::LsL2,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::BigM => "big-m",
            Method::Conic => "conic",
            Method::ConicPlus => "conic-plus",
            Method::AltOpt => "alt-opt",
            Method::Lad => "lad",
            Method::LsL2 => "ls-l2",
        }
    }

    pub fn is_mio(self) -> bool {
        matches!(self, Method::BigM | Method::Conic | Method::ConicPlus)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        match norm.as_str() {
            "big-m" | "bigm" => Ok(Method::BigM),
            "conic" => Ok(Method::Conic),
            "conic-plus" | "conic+" | "conicplus" => Ok(Method::ConicPlus),
            "alt-opt" | "altopt" => Ok(Method::AltOpt),
            "lad" => Ok(Method::Lad),
            "ls-l2" | "ls+l2" | "lsl2" => Ok(Method::LsL2),
            _ => Err(Error::InvalidInput(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Relative optimality gap at which branch-and-bound stops.
    pub gap: f64,
    pub integrality: f64,
    /// Relative accuracy of node relaxations (certificate vs. value).
    pub relax: f64,
    /// Lower clamp on free z during relaxation iterations.
    pub z_floor: f64,
    pub psd: f64,
    /// Lower bound on `u_i = 1/(1 - d_i)` in the weight SDP.
    pub u_floor: f64,
    pub lad: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            gap: 1e-6,
            integrality: 1e-6,
            relax: 1e-9,
            z_floor: 1e-9,
            psd: 1e-8,
            u_floor: 1.001,
            lad: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub lambda: f64,
    /// Number of rows that may be discarded (m - h).
    pub budget: usize,
    /// Regularization matrix; `None` means identity.
    pub t: Option<DMatrix<f64>>,
    pub intercept_mode: InterceptMode,
    pub method: Method,
    pub time_limit_s: f64,
    pub seed: u64,
    pub big_m: f64,
    pub tolerances: Tolerances,
}

impl ProblemSpec {
    pub fn new(method: Method, lambda: f64, budget: usize) -> Self {
        ProblemSpec {
            lambda,
            budget,
            t: None,
            intercept_mode: InterceptMode::Proxy(None),
            method,
            time_limit_s: 600.0,
            seed: 0,
            big_m: 1000.0,
            tolerances: Tolerances::default(),
        }
    }

    pub fn with_intercept(mut self, mode: InterceptMode) -> Self {
        self.intercept_mode = mode;
        self
    }

    pub fn with_time_limit(mut self, seconds: f64) -> Self {
        self.time_limit_s = seconds;
        self
    }

    /// `T'T`, or the identity when no `T` was given.
    pub fn ttt(&self, n: usize) -> DMatrix<f64> {
        match &self.t {
            None => DMatrix::identity(n, n),
            Some(t) => t.transpose() * t,
        }
    }

    pub fn validate(&self, inst: &StandardizedInstance) -> Result<()> {
        let m = inst.m();
        let n = inst.n();
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidInput(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.method.is_mio() && self.method != Method::BigM && self.lambda <= 0.0 {
            return Err(Error::InvalidInput("conic formulations need lambda > 0".into()));
        }
        if m == 0 || self.budget >= m {
            return Err(Error::InvalidInput(format!(
                "budget {} must lie in [0, m-1] with m = {m}",
                self.budget
            )));
        }
        let reliable = inst.reliable.iter().filter(|&&r| r).count();
        if self.budget + reliable > m {
            return Err(Error::InvalidInput(format!(
                "budget {} plus {reliable} reliable rows exceeds m = {m}",
                self.budget
            )));
        }
        if let Some(t) = &self.t {
            if t.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "T has {} columns, data has {n}",
                    t.ncols()
                )));
            }
            let (lo, _) = min_eig_sym(&self.ttt(n));
            if lo <= 0.0 {
                return Err(Error::InvalidInput("T'T is not positive definite".into()));
            }
        }
        if !(self.time_limit_s > 0.0) {
            return Err(Error::InvalidInput("time limit must be positive".into()));
        }
        if !(self.big_m > 0.0) {
            return Err(Error::InvalidInput("M must be positive".into()));
        }
        Ok(())
    }
}

/// How the intercept enters the lifted design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterceptLayout {
    None,
    /// Column of ones with penalty `lambda (x0' )^2` where `x0 = center + x0'`.
    Penalized { center: f64 },
    /// Column of ones, no penalty.
    Free,
}

impl InterceptLayout {
    pub fn has_column(self) -> bool {
        !matches!(self, InterceptLayout::None)
    }
}

/// The lifted regression problem.
#[derive(Debug, Clone)]
pub struct Design {
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub q_pen: DMatrix<f64>,
    pub reliable: Vec<bool>,
    pub budget: usize,
    pub layout: InterceptLayout,
}

impl Design {
    pub fn new(inst: &StandardizedInstance, spec: &ProblemSpec) -> Result<Self> {
        spec.validate(inst)?;
        let layout = match spec.intercept_mode {
            InterceptMode::Zero => InterceptLayout::None,
            InterceptMode::Reliable => InterceptLayout::Free,
            InterceptMode::Proxy(Some(c)) => InterceptLayout::Penalized { center: c },
            InterceptMode::Proxy(None) => {
                let free = Self::with_layout(inst, spec, InterceptLayout::Free, 0)?;
                let keep = vec![true; inst.m()];
                let (x, _) = free.ridge(&keep)?;
                InterceptLayout::Penalized { center: x[0] }
            }
        };
        Self::with_layout(inst, spec, layout, spec.budget)
    }

    pub fn with_layout(
        inst: &StandardizedInstance,
        spec: &ProblemSpec,
        layout: InterceptLayout,
        budget: usize,
    ) -> Result<Self> {
        let (m, n) = (inst.m(), inst.n());
        let ttt = spec.ttt(n) * spec.lambda;
        let (a, y, q_pen) = match layout {
            InterceptLayout::None => (inst.a.clone(), inst.y.clone(), ttt),
            InterceptLayout::Penalized { .. } | InterceptLayout::Free => {
                let mut a = DMatrix::from_element(m, n + 1, 1.0);
                a.view_mut((0, 1), (m, n)).copy_from(&inst.a);
                let mut q = DMatrix::zeros(n + 1, n + 1);
                q.view_mut((1, 1), (n, n)).copy_from(&ttt);
                let mut y = inst.y.clone();
                if let InterceptLayout::Penalized { center } = layout {
                    q[(0, 0)] = spec.lambda;
                    y.add_scalar_mut(-center);
                }
                (a, y, q)
            }
        };
        Ok(Design {
            a,
            y,
            q_pen,
            reliable: inst.reliable.clone(),
            budget,
            layout,
        })
    }

    /// A design with no intercept from explicit parts.
    pub fn from_parts(
        a: DMatrix<f64>,
        y: DVector<f64>,
        q_pen: DMatrix<f64>,
        reliable: Vec<bool>,
        budget: usize,
    ) -> Result<Self> {
        let (m, p) = a.shape();
        if y.len() != m || reliable.len() != m || q_pen.shape() != (p, p) {
            return Err(Error::InvalidInput("design dimension mismatch".into()));
        }
        if budget >= m || budget + reliable.iter().filter(|&&r| r).count() > m {
            return Err(Error::InvalidInput(format!("budget {budget} infeasible for m = {m}")));
        }
        Ok(Design {
            a,
            y,
            q_pen,
            reliable,
            budget,
            layout: InterceptLayout::None,
        })
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.a.ncols()
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.a.row(i).transpose()
    }

    pub fn residuals(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.y - &self.a * x
    }

    /// `Q_pen` plus the Gram matrix of reliable rows.
    pub fn q_reg(&self) -> DMatrix<f64> {
        let w: Vec<f64> = self.reliable.iter().map(|&r| if r { 1.0 } else { 0.0 }).collect();
        &self.q_pen + weighted_gram(&self.a, &w)
    }

    pub fn free_rows(&self) -> usize {
        self.reliable.iter().filter(|&&r| !r).count()
    }

    /// Ridge fit on rows with `keep[i]`; returns the lifted coefficients and
    /// the objective `sum_keep r^2 + x'Q_pen x`.
    pub fn ridge(&self, keep: &[bool]) -> Result<(DVector<f64>, f64)> {
        let w: Vec<f64> = keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect();
        self.weighted_ridge(&w, &self.q_pen)
    }

    /// Minimizer of `sum_i w_i r_i^2 + x'Qx`, with that minimum.
    pub(crate) fn weighted_ridge(
        &self,
        weights: &[f64],
        q: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, f64)> {
        let h = q + weighted_gram(&self.a, weights);
        let mut rhs = DVector::zeros(self.p());
        for (i, &wi) in weights.iter().enumerate() {
            if wi != 0.0 {
                rhs.axpy(wi * self.y[i], &self.a.row(i).transpose(), 1.0);
            }
        }
        let x = factor_spd(&h)?.solve(&rhs);
        let r = self.residuals(&x);
        let mut obj = x.dot(&(q * &x));
        for (i, &wi) in weights.iter().enumerate() {
            obj += wi * r[i] * r[i];
        }
        Ok((x, obj))
    }

    /// LTS objective with the given rows discarded.
    pub fn objective(&self, x: &DVector<f64>, flagged: &[bool]) -> f64 {
        let r = self.residuals(x);
        let fit: f64 = (0..self.m()).filter(|&i| !flagged[i]).map(|i| r[i] * r[i]).sum();
        fit + x.dot(&(&self.q_pen * x))
    }

    /// Flags the `budget` largest |residuals| among non-reliable rows, lower
    /// index first on ties.
    pub fn largest_residuals(&self, r: &DVector<f64>, budget: usize) -> Vec<bool> {
        let mut idx: Vec<usize> = (0..self.m()).filter(|&i| !self.reliable[i]).collect();
        idx.sort_by(|&i, &j| r[j].abs().total_cmp(&r[i].abs()).then(i.cmp(&j)));
        let mut flagged = vec![false; self.m()];
        for &i in idx.iter().take(budget) {
            flagged[i] = true;
        }
        flagged
    }

    /// Best discard set for a fixed `x` and the resulting solution.
    pub fn evaluate_at(&self, x: &DVector<f64>) -> Solution {
        let flagged = self.largest_residuals(&self.residuals(x), self.budget);
        self.solution(x, &flagged)
    }

    /// Refits on the retained rows.
    pub fn fit_subset(&self, flagged: &[bool]) -> Result<Solution> {
        let keep: Vec<bool> = flagged.iter().map(|&f| !f).collect();
        let (x, _) = self.ridge(&keep)?;
        Ok(self.solution(&x, flagged))
    }

    /// Lifted coefficient vector for slopes `coef` and intercept `intercept`.
    /// The intercept is dropped when the layout has no column.
    pub fn lift(&self, coef: &DVector<f64>, intercept: f64) -> DVector<f64> {
        let shift = match self.layout {
            InterceptLayout::None => return coef.clone(),
            InterceptLayout::Free => intercept,
            InterceptLayout::Penalized { center } => intercept - center,
        };
        let mut x = DVector::zeros(coef.len() + 1);
        x[0] = shift;
        x.rows_mut(1, coef.len()).copy_from(coef);
        x
    }

    /// Packs lifted coefficients into a [`Solution`].
    pub fn solution(&self, x: &DVector<f64>, flagged: &[bool]) -> Solution {
        let r = self.residuals(x);
        let w = DVector::from_fn(self.m(), |i, _| if flagged[i] { -r[i] } else { 0.0 });
        let (coef, intercept) = match self.layout {
            InterceptLayout::None => (x.clone(), 0.0),
            InterceptLayout::Free => (x.rows(1, x.len() - 1).into_owned(), x[0]),
            InterceptLayout::Penalized { center } => {
                (x.rows(1, x.len() - 1).into_owned(), center + x[0])
            }
        };
        Solution {
            x: coef,
            intercept,
            z: flagged.to_vec(),
            w,
            objective: self.objective(x, flagged),
        }
    }
}

/// A feasible point of the LTS problem in standardized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: DVector<f64>,
    pub intercept: f64,
    /// `true` marks a discarded row.
    pub z: Vec<bool>,
    pub w: DVector<f64>,
    pub objective: f64,
}

impl Solution {
    pub fn discarded_indices(&self) -> Vec<usize> {
        (0..self.z.len()).filter(|&i| self.z[i]).collect()
    }

    pub fn discarded_count(&self) -> usize {
        self.z.iter().filter(|&&z| z).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny() -> StandardizedInstance {
        StandardizedInstance::from_raw(
            DMatrix::from_column_slice(3, 1, &[1.0, 0.0, -1.0]),
            DVector::from_vec(vec![1.0, 0.0, -1.0]),
            vec![false; 3],
        )
        .unwrap()
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert_eq!("conic+".parse::<Method>().unwrap(), Method::ConicPlus);
        assert!("gurobi".parse::<Method>().is_err());
    }

    #[test]
    fn scalar_ridge() {
        let spec = ProblemSpec::new(Method::LsL2, 1.0, 0).with_intercept(InterceptMode::Zero);
        let d = Design::new(&tiny(), &spec).unwrap();
        let (x, obj) = d.ridge(&[true; 3]).unwrap();
        assert_relative_eq!(x[0], 2.0 / 3.0, epsilon = 1e-14);
        // residuals (1/3, 0, -1/3), penalty 4/9
        assert_relative_eq!(obj, 2.0 / 9.0 + 4.0 / 9.0, epsilon = 1e-14);
    }

    #[test]
    fn proxy_center_from_free_fit() {
        let inst = StandardizedInstance::from_raw(
            DMatrix::from_column_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]),
            DVector::from_vec(vec![5.0, 7.0, 9.0, 11.0]),
            vec![false; 4],
        )
        .unwrap();
        let spec = ProblemSpec::new(Method::Conic, 1e-9, 1);
        let d = Design::new(&inst, &spec).unwrap();
        match d.layout {
            InterceptLayout::Penalized { center } => assert!((center - 3.0).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
        let sol = d.fit_subset(&[false, false, false, true]).unwrap();
        assert!((sol.intercept - 3.0).abs() < 1e-6);
        assert!((sol.x[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn validation() {
        let inst = tiny();
        assert!(ProblemSpec::new(Method::Conic, 0.0, 1).validate(&inst).is_err());
        assert!(ProblemSpec::new(Method::BigM, 0.0, 1).validate(&inst).is_ok());
        assert!(ProblemSpec::new(Method::BigM, 1.0, 3).validate(&inst).is_err());
        let mut s = ProblemSpec::new(Method::Conic, 1.0, 1);
        s.t = Some(DMatrix::zeros(1, 1));
        assert!(s.validate(&inst).is_err());
    }

    #[test]
    fn largest_residuals_ties_to_lower_index() {
        let spec = ProblemSpec::new(Method::LsL2, 1.0, 1).with_intercept(InterceptMode::Zero);
        let d = Design::new(&tiny(), &spec).unwrap();
        let r = DVector::from_vec(vec![2.0, -2.0, 1.0]);
        assert_eq!(d.largest_residuals(&r, 1), vec![true, false, false]);
    }

    #[test]
    fn solution_w_absorbs_flagged_residual() {
        let spec = ProblemSpec::new(Method::LsL2, 1.0, 1).with_intercept(InterceptMode::Zero);
        let d = Design::new(&tiny(), &spec).unwrap();
        let sol = d.fit_subset(&[true, false, false]).unwrap();
        let r = d.residuals(&sol.x);
        assert_relative_eq!(sol.w[0], -r[0]);
        assert_eq!(sol.w[1], 0.0);
        assert_eq!(sol.discarded_indices(), vec![0]);
    }
}
