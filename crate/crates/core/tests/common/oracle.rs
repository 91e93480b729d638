//! Straight-line reference implementations used as test oracles. Written
//! independently of the library: no max-subtraction, ranks by counting,
//! explicit loops everywhere.
#![allow(dead_code, clippy::needless_range_loop)]

#[derive(Clone, Copy, Debug)]
pub struct Knobs {
    pub lambda: f64,
    pub z: usize,
    pub a: f64,
    pub start: f64,
    pub end: f64,
    pub eps: f64,
}

pub fn normalise(v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    v.iter()
        .map(|r| {
            let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
            r.iter().map(|x| x / n).collect()
        })
        .collect()
}

pub fn activation(img: &[Vec<f64>], txt: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (img, txt) = (normalise(img), normalise(txt));
    img.iter()
        .map(|x| txt.iter().map(|t| x.iter().zip(t).map(|(a, b)| a * b).sum()).collect())
        .collect()
}

pub fn softmax_rows(p: &[Vec<f64>], a: f64) -> Vec<Vec<f64>> {
    p.iter()
        .map(|row| {
            let e: Vec<f64> = row.iter().map(|v| (a * v).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
        .collect()
}

/// 0-based rank of image i: how many images beat it.
pub fn rank(q: &[f64], i: usize) -> usize {
    (0..q.len()).filter(|&j| q[j] > q[i] || (q[j] == q[i] && j < i)).count()
}

pub fn membership(q: &[f64], z: usize, start: f64, end: f64) -> Vec<f64> {
    (0..q.len())
        .map(|i| {
            let r = rank(q, i);
            if r >= z {
                0.0
            } else if z == 1 {
                start
            } else {
                start + (end - start) * r as f64 / (z as f64 - 1.0)
            }
        })
        .collect()
}

fn clamp(v: f64, lo: f64) -> f64 {
    if v < lo {
        lo
    } else if v > 1.0 {
        1.0
    } else {
        v
    }
}

/// Soft WPMI of one activation vector from the conditionals.
pub fn soft(cond: &[Vec<f64>], q: &[f64], k: &Knobs) -> Vec<f64> {
    let n = cond.len();
    let m = cond[0].len();
    let w = membership(q, k.z, k.start, k.end);
    let mut out = vec![0.0; m];
    for (j, o) in out.iter_mut().enumerate() {
        let mut evidence = 0.0;
        let mut marginal = 0.0;
        for i in 0..n {
            evidence += clamp(1.0 + w[i] * (cond[i][j] - 1.0), k.eps).ln();
            marginal += cond[i][j];
        }
        marginal /= n as f64;
        *o = evidence - k.lambda * marginal.max(k.eps).ln();
    }
    out
}

/// Hard WPMI: top-Z images weigh fully.
pub fn hard(cond: &[Vec<f64>], q: &[f64], k: &Knobs) -> Vec<f64> {
    let n = cond.len();
    let m = cond[0].len();
    let mut out = vec![0.0; m];
    for (j, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        let mut marginal = 0.0;
        for i in 0..n {
            if rank(q, i) < k.z {
                s += clamp(cond[i][j], k.eps).ln();
            }
            marginal += cond[i][j];
        }
        *o = s - k.lambda * (marginal / n as f64).max(k.eps).ln();
    }
    out
}

/// Full K×M similarity table from raw embeddings and an N×K activation table.
pub fn similarity(img: &[Vec<f64>], txt: &[Vec<f64>], acts: &[Vec<f64>], k: &Knobs) -> Vec<Vec<f64>> {
    let cond = softmax_rows(&activation(img, txt), k.a);
    let neurons = acts[0].len();
    (0..neurons)
        .map(|n| {
            let q: Vec<f64> = acts.iter().map(|r| r[n]).collect();
            soft(&cond, &q, k)
        })
        .collect()
}

pub fn mean(s: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for row in s {
        for v in row {
            total += v;
            count += 1;
        }
    }
    total / count as f64
}

/// (encoded concepts, activated neurons) by double loop.
pub fn recount(s: &[Vec<f64>], tau: f64) -> (Vec<usize>, Vec<usize>) {
    let m = s[0].len();
    let concepts = (0..m).filter(|&j| s.iter().any(|row| row[j] >= tau)).collect();
    let neurons = (0..s.len())
        .filter(|&k| s[k].iter().cloned().fold(f64::NEG_INFINITY, f64::max) >= tau)
        .collect();
    (concepts, neurons)
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}
