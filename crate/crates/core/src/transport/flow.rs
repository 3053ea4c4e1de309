//! Exact transportation solver: successive shortest paths with node
//! potentials on integer supplies.

/// Optimal flow between integer supplies and demands of equal total.
pub struct FlowSolution {
    /// `(source, sink, amount)` with positive amounts.
    pub flows: Vec<(usize, usize, i64)>,
    /// Dual potentials `u` (sources) and `v` (sinks) with `u_i + v_j <= c_ij`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Solves `min Σ c_ij f_ij` subject to row sums `supply` and column sums
/// `demand`. `cost` is row-major `supply.len() x demand.len()`.
pub fn transport(supply: &[i64], demand: &[i64], cost: &[f64]) -> FlowSolution {
    let n = supply.len();
    let m = demand.len();
    let mut flow = vec![0i64; n * m];
    let mut sup = supply.to_vec();
    let mut dem = demand.to_vec();
    // Potentials of sources and sinks; reduced cost c_ij + ps_i - pt_j >= 0.
    let mut ps = vec![0.0; n];
    let mut pt = vec![0.0; m];
    for j in 0..m {
        pt[j] = (0..n).map(|i| cost[i * m + j]).fold(f64::INFINITY, f64::min);
    }

    let mut ds = vec![0.0; n];
    let mut dt = vec![0.0; m];
    let mut done_s = vec![false; n];
    let mut done_t = vec![false; m];
    let mut pred_t = vec![usize::MAX; m];
    let mut pred_s = vec![usize::MAX; n];

    while sup.iter().any(|&s| s > 0) {
        for i in 0..n {
            ds[i] = if sup[i] > 0 { 0.0 } else { f64::INFINITY };
            done_s[i] = false;
            pred_s[i] = usize::MAX;
        }
        dt.iter_mut().for_each(|d| *d = f64::INFINITY);
        done_t.iter_mut().for_each(|d| *d = false);
        pred_t.iter_mut().for_each(|p| *p = usize::MAX);

        let target;
        loop {
            // Select the closest unfinished node among sources and sinks.
            let mut best = f64::INFINITY;
            let mut pick: Option<(bool, usize)> = None;
            for i in 0..n {
                if !done_s[i] && ds[i] < best {
                    best = ds[i];
                    pick = Some((true, i));
                }
            }
            for j in 0..m {
                if !done_t[j] && dt[j] < best {
                    best = dt[j];
                    pick = Some((false, j));
                }
            }
            let (is_source, k) = pick.expect("residual network is connected");
            if is_source {
                done_s[k] = true;
                for j in 0..m {
                    if done_t[j] {
                        continue;
                    }
                    let rc = (cost[k * m + j] + ps[k] - pt[j]).max(0.0);
                    let cand = ds[k] + rc;
                    if cand < dt[j] {
                        dt[j] = cand;
                        pred_t[j] = k;
                    }
                }
            } else {
                done_t[k] = true;
                if dem[k] > 0 {
                    target = k;
                    break;
                }
                for i in 0..n {
                    if done_s[i] || flow[i * m + k] == 0 {
                        continue;
                    }
                    let rc = (-cost[i * m + k] - ps[i] + pt[k]).max(0.0);
                    let cand = dt[k] + rc;
                    if cand < ds[i] {
                        ds[i] = cand;
                        pred_s[i] = k;
                    }
                }
            }
        }

        let dist = dt[target];
        for i in 0..n {
            ps[i] += ds[i].min(dist);
        }
        for j in 0..m {
            pt[j] += dt[j].min(dist);
        }

        // Bottleneck along the path.
        let mut amount = dem[target];
        let mut j = target;
        loop {
            let i = pred_t[j];
            let pj = pred_s[i];
            if pj == usize::MAX {
                amount = amount.min(sup[i]);
                break;
            }
            amount = amount.min(flow[i * m + pj]);
            j = pj;
        }
        let mut j = target;
        loop {
            let i = pred_t[j];
            flow[i * m + j] += amount;
            let pj = pred_s[i];
            if pj == usize::MAX {
                sup[i] -= amount;
                break;
            }
            flow[i * m + pj] -= amount;
            j = pj;
        }
        dem[target] -= amount;
    }

    let mut flows = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if flow[i * m + j] > 0 {
                flows.push((i, j, flow[i * m + j]));
            }
        }
    }
    FlowSolution { flows, u: ps.iter().map(|p| -p).collect(), v: pt }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_transport_problem() {
        let cost = [1.0, 4.0, 2.0, 3.0];
        let sol = transport(&[3, 2], &[1, 4], &cost);
        let total: f64 = sol.flows.iter().map(|&(i, j, f)| cost[i * 2 + j] * f as f64).sum();
        assert_eq!(total, 15.0);
        for i in 0..2 {
            for j in 0..2 {
                assert!(sol.u[i] + sol.v[j] <= cost[i * 2 + j] + 1e-12);
            }
        }
        let dual: f64 = 3.0 * sol.u[0] + 2.0 * sol.u[1] + sol.v[0] + 4.0 * sol.v[1];
        assert!((dual - 15.0).abs() < 1e-12);
    }
}
