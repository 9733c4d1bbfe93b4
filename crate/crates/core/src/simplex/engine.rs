//! Bounded-variable revised simplex (primal and dual) over a dense LU of the
//! basis with product-form updates.

use crate::error::{Error, Result};
use crate::linalg::{dot, Lu};

use super::{LinearProgram, LpSolution, LpStatus, TOL_FEAS, TOL_OPT};

const TOL_PIVOT: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const DEGENERATE_STEP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
enum State {
    Basic(usize),
    Lower,
    Upper,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Outcome {
    Optimal,
    Unbounded,
    Infeasible,
}

struct Factor {
    lu: Lu,
    etas: Vec<(usize, Vec<f64>)>,
}

impl Factor {
    fn ftran(&self, v: &mut [f64]) {
        self.lu.solve(v);
        for (r, w) in &self.etas {
            let vr = v[*r] / w[*r];
            if vr != 0.0 {
                for (vi, wi) in v.iter_mut().zip(w) {
                    *vi -= wi * vr;
                }
            }
            v[*r] = vr;
        }
    }

    fn btran(&self, v: &mut [f64]) {
        for (r, w) in self.etas.iter().rev() {
            let s = dot(w, v) - w[*r] * v[*r];
            v[*r] = (v[*r] - s) / w[*r];
        }
        self.lu.solve_transpose(v);
    }
}

pub(crate) struct Engine<'a> {
    m: usize,
    n_struct: usize,
    cols: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    rhs: &'a [f64],
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    factor: Option<Factor>,
    pub iterations: usize,
    limit: usize,
}

fn resting_state(lower: f64, upper: f64) -> (State, f64) {
    if lower.is_finite() {
        (State::Lower, lower)
    } else if upper.is_finite() {
        (State::Upper, upper)
    } else {
        (State::Free, 0.0)
    }
}

impl<'a> Engine<'a> {
    fn skeleton(lp: &LinearProgram, rhs: &'a [f64]) -> Engine<'a> {
        let m = lp.num_cons();
        let n = lp.num_vars();
        let mut state = Vec::with_capacity(n);
        let mut x = Vec::with_capacity(n);
        for j in 0..n {
            let (s, v) = resting_state(lp.lower()[j], lp.upper()[j]);
            state.push(s);
            x.push(v);
        }
        Engine {
            m,
            n_struct: n,
            cols: lp.columns().to_vec(),
            lower: lp.lower().to_vec(),
            upper: lp.upper().to_vec(),
            cost: lp.objective().to_vec(),
            rhs,
            x,
            state,
            basis: Vec::new(),
            factor: None,
            iterations: 0,
            limit: 50 * (m + n) + 5000,
        }
    }

    /// Cold start: singleton crash basis completed by artificials.
    pub(crate) fn cold(lp: &LinearProgram, rhs: &'a [f64]) -> Engine<'a> {
        let mut e = Engine::skeleton(lp, rhs);
        let m = e.m;
        let mut resid = rhs.to_vec();
        for j in 0..e.n_struct {
            let xj = e.x[j];
            if xj != 0.0 {
                for &(r, a) in &e.cols[j] {
                    resid[r] -= a * xj;
                }
            }
        }
        let mut row_owner: Vec<Option<usize>> = vec![None; m];
        for j in 0..e.n_struct {
            if e.cols[j].len() != 1 {
                continue;
            }
            let (r, a) = e.cols[j][0];
            if row_owner[r].is_some() {
                continue;
            }
            let v = e.x[j] + resid[r] / a;
            if v >= e.lower[j] - TOL_FEAS && v <= e.upper[j] + TOL_FEAS {
                row_owner[r] = Some(j);
                e.x[j] = v.max(e.lower[j]).min(e.upper[j]);
                resid[r] = 0.0;
            }
        }
        e.basis = vec![usize::MAX; m];
        for r in 0..m {
            let j = match row_owner[r] {
                Some(j) => j,
                None => {
                    let sign = if resid[r] >= 0.0 { 1.0 } else { -1.0 };
                    let j = e.cols.len();
                    e.cols.push(vec![(r, sign)]);
                    e.lower.push(0.0);
                    e.upper.push(f64::INFINITY);
                    e.cost.push(0.0);
                    e.x.push(resid[r].abs());
                    e.state.push(State::Lower);
                    j
                }
            };
            e.basis[r] = j;
            e.state[j] = State::Basic(r);
        }
        e
    }

    /// Warm start from a caller-supplied basis; `None` if it is not a valid
    /// nonsingular basis. Nonbasic indices in `at_upper` start at a finite
    /// upper bound.
    pub(crate) fn warm(lp: &LinearProgram, rhs: &'a [f64], basis: &[usize], at_upper: &[usize]) -> Option<Engine<'a>> {
        let mut e = Engine::skeleton(lp, rhs);
        if basis.len() != e.m {
            return None;
        }
        let mut seen = vec![false; e.n_struct];
        for &j in basis {
            if j >= e.n_struct || seen[j] {
                return None;
            }
            seen[j] = true;
        }
        for &j in at_upper {
            if j < e.n_struct && !seen[j] && e.upper[j].is_finite() {
                e.state[j] = State::Upper;
                e.x[j] = e.upper[j];
            }
        }
        e.basis = basis.to_vec();
        for (r, &j) in basis.iter().enumerate() {
            e.state[j] = State::Basic(r);
        }
        e.refactor().ok()?;
        e.recompute_xb();
        Some(e)
    }

    fn has_artificials(&self) -> bool {
        self.cols.len() > self.n_struct
    }

    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for &(r, a) in &self.cols[j] {
                dense[r * m + c] = a;
            }
        }
        let lu = Lu::factor(m, dense).map_err(|_| Error::Numerical("singular basis".into()))?;
        self.factor = Some(Factor { lu, etas: Vec::new() });
        Ok(())
    }

    fn factor(&self) -> &Factor {
        self.factor.as_ref().expect("factorized")
    }

    fn recompute_xb(&mut self) {
        let mut v = self.rhs.to_vec();
        for j in 0..self.cols.len() {
            if matches!(self.state[j], State::Basic(_)) {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, a) in &self.cols[j] {
                    v[r] -= a * xj;
                }
            }
        }
        self.factor().ftran(&mut v);
        for (r, &j) in self.basis.iter().enumerate() {
            self.x[j] = v[r];
        }
    }

    fn duals(&self) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| self.cost[j]).collect();
        self.factor().btran(&mut y);
        y
    }

    #[inline]
    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        self.cols[j].iter().map(|&(r, a)| a * y[r]).sum()
    }

    fn dense_column(&self, j: usize) -> Vec<f64> {
        let mut w = vec![0.0; self.m];
        for &(r, a) in &self.cols[j] {
            w[r] = a;
        }
        w
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.lower[j] == self.upper[j]
    }

    fn pivot(&mut self, r: usize, q: usize, w: Vec<f64>) -> Result<()> {
        let leave = self.basis[r];
        debug_assert!(!matches!(self.state[leave], State::Basic(_)));
        self.basis[r] = q;
        self.state[q] = State::Basic(r);
        let refresh = {
            let f = self.factor.as_mut().expect("factorized");
            f.etas.push((r, w));
            f.etas.len() >= REFACTOR_EVERY
        };
        if refresh {
            self.refactor()?;
            self.recompute_xb();
        }
        Ok(())
    }

    fn bump(&mut self) -> Result<()> {
        self.iterations += 1;
        if self.iterations > self.limit {
            return Err(Error::Numerical("simplex iteration limit reached".into()));
        }
        Ok(())
    }

    /// Primal simplex on the current cost vector, from a primal feasible basis.
    fn primal_loop(&mut self) -> Result<Outcome> {
        if self.factor.is_none() {
            self.refactor()?;
            self.recompute_xb();
        }
        let mut degenerate_run = 0usize;
        let bland_after = 50 * self.m.max(1);
        let mut verified = false;
        loop {
            let bland = degenerate_run > bland_after;
            let y = self.duals();
            let mut enter: Option<(usize, f64)> = None;
            let mut best = 0.0;
            for j in 0..self.cols.len() {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                let d = self.cost[j] - self.col_dot(j, &y);
                let (score, dir) = match st {
                    State::Lower if d < -TOL_OPT => (-d, 1.0),
                    State::Upper if d > TOL_OPT => (d, -1.0),
                    State::Free if d.abs() > TOL_OPT => (d.abs(), -d.signum()),
                    _ => continue,
                };
                if bland {
                    enter = Some((j, dir));
                    break;
                }
                if score > best {
                    best = score;
                    enter = Some((j, dir));
                }
            }
            let (q, dir) = match enter {
                Some(e) => e,
                None => {
                    if verified {
                        return Ok(Outcome::Optimal);
                    }
                    // fresh factorization before declaring optimality
                    self.refactor()?;
                    self.recompute_xb();
                    verified = true;
                    continue;
                }
            };
            verified = false;
            self.bump()?;
            let mut w = self.dense_column(q);
            self.factor().ftran(&mut w);

            let mut best_t = f64::INFINITY;
            let mut leave: Option<usize> = None;
            for i in 0..self.m {
                let rate = -dir * w[i];
                let var = self.basis[i];
                let t = if rate < -TOL_PIVOT && self.lower[var].is_finite() {
                    (self.x[var] - self.lower[var]) / -rate
                } else if rate > TOL_PIVOT && self.upper[var].is_finite() {
                    (self.upper[var] - self.x[var]) / rate
                } else {
                    continue;
                };
                let t = t.max(0.0);
                let take = match leave {
                    None => true,
                    Some(li) => {
                        let margin = 1e-12 * best_t.max(1.0);
                        if t < best_t - margin {
                            true
                        } else if t <= best_t + margin {
                            if bland {
                                var < self.basis[li]
                            } else {
                                let (a, b) = (w[i].abs(), w[li].abs());
                                a > b || (a == b && var < self.basis[li])
                            }
                        } else {
                            false
                        }
                    }
                };
                if take {
                    best_t = best_t.min(t);
                    leave = Some(i);
                }
            }
            if let Some(li) = leave {
                // keep the step equal to the chosen row's ratio
                let var = self.basis[li];
                let rate = -dir * w[li];
                best_t = if rate < 0.0 {
                    (self.x[var] - self.lower[var]) / -rate
                } else {
                    (self.upper[var] - self.x[var]) / rate
                }
                .max(0.0);
            }
            let span = self.upper[q] - self.lower[q];
            let flip = span.is_finite() && span <= best_t;
            if leave.is_none() && !flip {
                return Ok(Outcome::Unbounded);
            }
            let theta = if flip { span } else { best_t };
            if theta <= DEGENERATE_STEP {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            if theta > 0.0 {
                self.x[q] += dir * theta;
                for i in 0..self.m {
                    let var = self.basis[i];
                    self.x[var] -= dir * theta * w[i];
                }
            }
            if flip {
                if dir > 0.0 {
                    self.state[q] = State::Upper;
                    self.x[q] = self.upper[q];
                } else {
                    self.state[q] = State::Lower;
                    self.x[q] = self.lower[q];
                }
                continue;
            }
            let r = leave.unwrap();
            let out = self.basis[r];
            let rate = -dir * w[r];
            if rate < 0.0 {
                self.state[out] = State::Lower;
                self.x[out] = self.lower[out];
            } else {
                self.state[out] = State::Upper;
                self.x[out] = self.upper[out];
            }
            self.pivot(r, q, w)?;
        }
    }

    /// Dual simplex from a dual feasible basis.
    fn dual_loop(&mut self) -> Result<Outcome> {
        if self.factor.is_none() {
            self.refactor()?;
        }
        self.recompute_xb();
        loop {
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let var = self.basis[i];
                let v = self.x[var];
                let viol = if v < self.lower[var] - TOL_FEAS {
                    self.lower[var] - v
                } else if v > self.upper[var] + TOL_FEAS {
                    v - self.upper[var]
                } else {
                    continue;
                };
                let better = match pick {
                    None => true,
                    Some((pi, pv)) => viol > pv || (viol == pv && var < self.basis[pi]),
                };
                if better {
                    pick = Some((i, viol));
                }
            }
            let r = match pick {
                None => return Ok(Outcome::Optimal),
                Some((r, _)) => r,
            };
            self.bump()?;
            let out = self.basis[r];
            let below = self.x[out] < self.lower[out];
            let mut rho = vec![0.0; self.m];
            rho[r] = 1.0;
            self.factor().btran(&mut rho);
            let y = self.duals();
            let mut enter: Option<(usize, f64, f64)> = None;
            for j in 0..self.cols.len() {
                let st = self.state[j];
                if matches!(st, State::Basic(_)) || self.is_fixed(j) {
                    continue;
                }
                let alpha = self.col_dot(j, &rho);
                let ok = match st {
                    State::Lower => {
                        if below {
                            alpha < -TOL_PIVOT
                        } else {
                            alpha > TOL_PIVOT
                        }
                    }
                    State::Upper => {
                        if below {
                            alpha > TOL_PIVOT
                        } else {
                            alpha < -TOL_PIVOT
                        }
                    }
                    State::Free => alpha.abs() > TOL_PIVOT,
                    State::Basic(_) => false,
                };
                if !ok {
                    continue;
                }
                let d = self.cost[j] - self.col_dot(j, &y);
                let ratio = d.abs() / alpha.abs();
                let better = match enter {
                    None => true,
                    Some((_, br, ba)) => {
                        ratio < br - 1e-15 || (ratio <= br + 1e-15 && alpha.abs() > ba)
                    }
                };
                if better {
                    enter = Some((j, ratio, alpha.abs()));
                }
            }
            let q = match enter {
                None => return Ok(Outcome::Infeasible),
                Some((q, _, _)) => q,
            };
            let mut w = self.dense_column(q);
            self.factor().ftran(&mut w);
            if below {
                self.state[out] = State::Lower;
                self.x[out] = self.lower[out];
            } else {
                self.state[out] = State::Upper;
                self.x[out] = self.upper[out];
            }
            self.pivot(r, q, w)?;
            self.recompute_xb();
        }
    }

    fn primal_feasible(&self) -> bool {
        self.basis.iter().all(|&j| {
            let v = self.x[j];
            v >= self.lower[j] - TOL_FEAS * (1.0 + self.lower[j].abs().min(1e12))
                && v <= self.upper[j] + TOL_FEAS * (1.0 + self.upper[j].abs().min(1e12))
        })
    }

    fn dual_feasible(&self) -> bool {
        let y = self.duals();
        (0..self.cols.len()).all(|j| {
            if self.is_fixed(j) {
                return true;
            }
            let d = self.cost[j] - self.col_dot(j, &y);
            match self.state[j] {
                State::Basic(_) => true,
                State::Lower => d >= -TOL_OPT,
                State::Upper => d <= TOL_OPT,
                State::Free => d.abs() <= TOL_OPT,
            }
        })
    }

    fn drive_out_artificials(&mut self) -> Result<()> {
        for j in self.n_struct..self.cols.len() {
            self.lower[j] = 0.0;
            self.upper[j] = 0.0;
            if !matches!(self.state[j], State::Basic(_)) {
                self.state[j] = State::Lower;
                self.x[j] = 0.0;
            }
        }
        for r in 0..self.m {
            let art = self.basis[r];
            if art < self.n_struct {
                continue;
            }
            let mut rho = vec![0.0; self.m];
            rho[r] = 1.0;
            self.factor().btran(&mut rho);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.n_struct {
                if matches!(self.state[j], State::Basic(_)) {
                    continue;
                }
                let a = self.col_dot(j, &rho).abs();
                if a > 1e-9 && best.is_none_or(|(_, b)| a > b) {
                    best = Some((j, a));
                }
            }
            let q = match best {
                Some((q, _)) => q,
                None => return Err(Error::Numerical("redundant row after phase one".into())),
            };
            let mut w = self.dense_column(q);
            self.factor().ftran(&mut w);
            self.state[art] = State::Lower;
            self.x[art] = 0.0;
            self.pivot(r, q, w)?;
            self.recompute_xb();
        }
        Ok(())
    }

    /// Runs phase one (if needed) and phase two.
    pub(crate) fn run_cold(&mut self, objective: &[f64]) -> Result<Outcome> {
        self.refactor()?;
        self.recompute_xb();
        if self.has_artificials() {
            for j in 0..self.cols.len() {
                self.cost[j] = if j >= self.n_struct { 1.0 } else { 0.0 };
            }
            match self.primal_loop()? {
                Outcome::Optimal => {}
                _ => return Err(Error::Numerical("phase one did not terminate optimally".into())),
            }
            let infeas: f64 = (self.n_struct..self.cols.len()).map(|j| self.x[j].max(0.0)).sum();
            let scale = 1.0 + self.rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if infeas > TOL_FEAS * scale {
                return Ok(Outcome::Infeasible);
            }
            self.drive_out_artificials()?;
            for j in 0..self.cols.len() {
                self.cost[j] = if j < self.n_struct { objective[j] } else { 0.0 };
            }
        }
        self.run_phase_two()
    }

    /// Phase two from a primal feasible basis, with a dual cleanup pass when
    /// refactorization reveals drift.
    pub(crate) fn run_phase_two(&mut self) -> Result<Outcome> {
        for _ in 0..5 {
            match self.primal_loop()? {
                Outcome::Optimal => {}
                other => return Ok(other),
            }
            if self.primal_feasible() {
                return Ok(Outcome::Optimal);
            }
            match self.dual_loop()? {
                Outcome::Optimal => {}
                _ => return Err(Error::Numerical("lost feasibility after refactorization".into())),
            }
            if self.dual_feasible() {
                return Ok(Outcome::Optimal);
            }
        }
        Err(Error::Numerical("primal/dual cleanup did not settle".into()))
    }

    /// Warm path: classify the supplied basis and continue with the matching
    /// algorithm. Returns `None` when a cold start is required.
    pub(crate) fn run_warm(&mut self) -> Result<Option<Outcome>> {
        let pf = self.primal_feasible();
        let df = self.dual_feasible();
        if pf && df {
            return Ok(Some(Outcome::Optimal));
        }
        if pf {
            return self.run_phase_two().map(Some);
        }
        if df {
            return match self.dual_loop()? {
                Outcome::Optimal => self.run_phase_two().map(Some),
                Outcome::Infeasible => Ok(Some(Outcome::Infeasible)),
                Outcome::Unbounded => Ok(None),
            };
        }
        Ok(None)
    }

    pub(crate) fn solution(&self, lp: &LinearProgram, outcome: Outcome) -> LpSolution {
        match outcome {
            Outcome::Optimal => {
                let x = self.x[..self.n_struct].to_vec();
                let mut basis = self.basis.clone();
                basis.sort_unstable();
                let duals = self.duals();
                let objective = dot(lp.objective(), &x);
                LpSolution { status: LpStatus::Optimal, x, objective, basis, duals, iterations: self.iterations }
            }
            Outcome::Infeasible => LpSolution::non_optimal(LpStatus::Infeasible, self.iterations),
            Outcome::Unbounded => LpSolution::non_optimal(LpStatus::Unbounded, self.iterations),
        }
    }
}
