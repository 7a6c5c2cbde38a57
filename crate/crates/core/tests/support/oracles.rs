//! Slow, independent reference implementations used only by tests.
#![allow(dead_code)]

/// Mean squared error by explicit indexing.
pub fn mse_loop(p: &[f64], t: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..p.len() {
        let d = p[k] - t[k];
        acc += d * d;
    }
    acc / p.len() as f64
}

pub fn cosine_loop(p: &[f64], t: &[f64]) -> f64 {
    let (mut pt, mut pp, mut tt) = (0.0, 0.0, 0.0);
    for k in 0..p.len() {
        pt += p[k] * t[k];
        pp += p[k] * p[k];
        tt += t[k] * t[k];
    }
    if pp == 0.0 || tt == 0.0 {
        return 0.0;
    }
    pt / (pp.sqrt() * tt.sqrt())
}

/// Two nested loops over the whole test set.
pub fn rank_loop(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Vec<f64> {
    let n = preds.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let own = cosine_loop(&preds[i], &targets[i]);
        let mut count = 0usize;
        for j in 0..n {
            if cosine_loop(&preds[i], &targets[j]) > own {
                count += 1;
            }
        }
        out.push(count as f64 / n as f64);
    }
    out
}

fn ngrams<'a>(tokens: &[&'a str], n: usize) -> Vec<Vec<&'a str>> {
    if tokens.len() < n {
        return Vec::new();
    }
    (0..=tokens.len() - n).map(|i| tokens[i..i + n].to_vec()).collect()
}

/// Textbook unsmoothed sentence BLEU with brevity penalty, counting with
/// linear scans instead of hash maps.
pub fn naive_bleu(hyp: &[&str], reference: &[&str], max_order: usize) -> f64 {
    if hyp.is_empty() {
        return 0.0;
    }
    let mut log_p = 0.0;
    for n in 1..=max_order {
        let h = ngrams(hyp, n);
        let r = ngrams(reference, n);
        if h.is_empty() {
            return 0.0;
        }
        let mut used = vec![false; r.len()];
        let mut matched = 0usize;
        for g in &h {
            if let Some(k) = (0..r.len()).find(|&k| !used[k] && &r[k] == g) {
                used[k] = true;
                matched += 1;
            }
        }
        if matched == 0 {
            return 0.0;
        }
        log_p += (matched as f64 / h.len() as f64).ln();
    }
    let c = hyp.len() as f64;
    let r = reference.len() as f64;
    let bp = if c < r { (1.0 - r / c).exp() } else { 1.0 };
    bp * (log_p / max_order as f64).exp()
}

/// Minimum transport cost over every basic feasible solution: each spanning
/// tree of the bipartite row/column graph determines one vertex plan.
pub fn ot_vertex_enumeration(a: &[f64], b: &[f64], cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..n).map(move |j| (i, j))).collect();
    let need = m + n - 1;
    let mut best = f64::INFINITY;
    let total = cells.len();
    assert!(total <= 20, "enumeration is exponential");
    for mask in 0u32..(1 << total) {
        if mask.count_ones() as usize != need {
            continue;
        }
        let chosen: Vec<(usize, usize)> =
            (0..total).filter(|k| mask >> k & 1 == 1).map(|k| cells[k]).collect();
        if let Some(plan) = tree_plan(a, b, &chosen) {
            let c: f64 = chosen.iter().zip(&plan).map(|(&(i, j), x)| x * cost[i][j]).sum();
            best = best.min(c);
        }
    }
    best
}

/// Solves the plan supported on `cells` by peeling leaves; `None` when the
/// cells contain a cycle or the plan goes negative.
fn tree_plan(a: &[f64], b: &[f64], cells: &[(usize, usize)]) -> Option<Vec<f64>> {
    let (m, n) = (a.len(), b.len());
    let mut row_left = a.to_vec();
    let mut col_left = b.to_vec();
    let mut alive = vec![true; cells.len()];
    let mut value = vec![0.0; cells.len()];
    for _ in 0..cells.len() {
        let mut progressed = false;
        for node in 0..m + n {
            let incident: Vec<usize> = (0..cells.len())
                .filter(|&k| alive[k] && if node < m { cells[k].0 == node } else { cells[k].1 == node - m })
                .collect();
            if incident.len() == 1 {
                let k = incident[0];
                let (i, j) = cells[k];
                let x = if node < m { row_left[i] } else { col_left[j] };
                value[k] = x;
                row_left[i] -= x;
                col_left[j] -= x;
                alive[k] = false;
                progressed = true;
                break;
            }
        }
        if !progressed {
            return None; // cycle: no leaf left
        }
    }
    if value.iter().any(|&x| x < -1e-12) {
        return None;
    }
    if row_left.iter().chain(&col_left).any(|x| x.abs() > 1e-9) {
        return None;
    }
    Some(value)
}
