use crate::error::{Error, Result};
use crate::links::LinkFunction;
use crate::model::{Dataset, ModelSpec, ParamState};

/// Joint `(beta, U)` proposal that keeps linear predictors fixed.
///
/// Level by level, each group absorbs the change `x_f^T (beta - beta*)` of its
/// first observation `f`, less what the enclosing levels already absorbed.
/// With singleton groups at the innermost level every linear predictor is
/// unchanged. The map is a volume-preserving shear, so the proposal stays
/// symmetric in any case.
#[derive(Debug, Clone)]
pub struct ConsistentShift {
    /// `coef[level][group]` with `shift = coef . (beta - beta*)`.
    coef: Vec<Vec<Vec<f64>>>,
    offsets: Vec<usize>,
}

impl ConsistentShift {
    pub fn new(spec: &ModelSpec, data: &Dataset) -> Result<Self> {
        let adjustment_free = matches!(spec.link, LinkFunction::Log | LinkFunction::Identity);
        if spec.marginally_interpretable && !adjustment_free {
            return Err(Error::Config(format!(
                "consistent proposals need an adjustment that does not depend on the linear predictor; \
                 the {} link does",
                spec.link
            )));
        }
        if spec.levels.is_empty() {
            return Err(Error::Config("consistent proposals need at least one random-effect level".into()));
        }
        spec.check_data(data)?;
        let p = spec.p();
        let mut coef: Vec<Vec<Vec<f64>>> = Vec::with_capacity(spec.levels.len());
        for (l, level) in spec.levels.iter().enumerate() {
            let mut rows = vec![vec![0.0; p]; level.n_groups()];
            let mut seen = vec![false; level.n_groups()];
            for i in 0..data.n() {
                let g = data.groups[l][i];
                if seen[g] {
                    continue;
                }
                seen[g] = true;
                let mut c = data.x[i].clone();
                for (outer, outer_coef) in coef.iter().enumerate() {
                    let og = data.groups[outer][i];
                    for (cj, oj) in c.iter_mut().zip(&outer_coef[og]) {
                        *cj -= oj;
                    }
                }
                rows[g] = c;
            }
            coef.push(rows);
        }
        Ok(ConsistentShift { coef, offsets: spec.level_offsets() })
    }

    /// Candidate state with `beta*` and the shifted random effects.
    pub fn apply(&self, state: &ParamState, beta_star: &[f64]) -> ParamState {
        let diff: Vec<f64> = state.beta.iter().zip(beta_star).map(|(b, s)| b - s).collect();
        let mut u = state.u.clone();
        for (rows, off) in self.coef.iter().zip(&self.offsets) {
            for (g, c) in rows.iter().enumerate() {
                u[off + g] += c.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        ParamState {
            beta: beta_star.to_vec(),
            log_var: state.log_var.clone(),
            u,
        }
    }
}

/// One-shot form of [`ConsistentShift::apply`].
pub fn propose_beta_consistent(
    spec: &ModelSpec,
    data: &Dataset,
    state: &ParamState,
    beta_star: &[f64],
) -> Result<ParamState> {
    spec.check_state(state)?;
    if beta_star.len() != spec.p() {
        return Err(Error::invalid("beta* has the wrong length"));
    }
    Ok(ConsistentShift::new(spec, data)?.apply(state, beta_star))
}
