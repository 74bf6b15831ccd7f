//! Direct transcription of the measure definitions, one voxel and one
//! sample at a time, with no shared code from the library.
//!
//! `samples[i][x]` is p_i(x).

pub fn mean(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len() as f64;
    (0..samples[0].len())
        .map(|x| samples.iter().map(|s| s[x]).sum::<f64>() / n)
        .collect()
}

pub fn b(p: f64, t: f64) -> bool {
    p >= t
}

pub fn consensus(samples: &[Vec<f64>], t: f64) -> Vec<bool> {
    mean(samples).into_iter().map(|p| b(p, t)).collect()
}

/// U(x) = -(1/N) sum_i p_i(x) ln p_i(x), with 0 ln 0 = 0.
pub fn u(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len() as f64;
    (0..samples[0].len())
        .map(|x| {
            let mut acc = 0.0;
            for s in samples {
                let p = s[x];
                if p > 0.0 {
                    acc += p * p.ln();
                }
            }
            -acc / n
        })
        .collect()
}

/// Var_i(V_i) / (E_i[V_i] + 1), V_i the foreground volume of sample i,
/// population variance.
pub fn cv(samples: &[Vec<f64>], t: f64) -> f64 {
    let volumes: Vec<f64> = samples
        .iter()
        .map(|s| s.iter().filter(|&&p| b(p, t)).count() as f64)
        .collect();
    let n = volumes.len() as f64;
    let mean = volumes.iter().sum::<f64>() / n;
    let var = volumes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var / (mean + 1.0)
}

pub fn dice(a: &[bool], c: &[bool]) -> f64 {
    let inter = a.iter().zip(c).filter(|(x, y)| **x && **y).count() as f64;
    let total = (a.iter().filter(|v| **v).count() + c.iter().filter(|v| **v).count()) as f64;
    if total == 0.0 {
        1.0
    } else {
        2.0 * inter / total
    }
}

/// Mean Dice over all unordered pairs of binarized samples.
pub fn d_pw(samples: &[Vec<f64>], t: f64) -> f64 {
    let masks: Vec<Vec<bool>> = samples.iter().map(|s| s.iter().map(|&p| b(p, t)).collect()).collect();
    let mut sum = 0.0;
    let mut pairs = 0.0;
    for i in 0..masks.len() {
        for j in i + 1..masks.len() {
            sum += dice(&masks[i], &masks[j]);
            pairs += 1.0;
        }
    }
    sum / pairs
}

/// (1 / sum_x b(p(x))) * sum over p(x) >= t of U(x); None for an empty consensus.
pub fn u_labelled(samples: &[Vec<f64>], t: f64) -> Option<f64> {
    let p = mean(samples);
    let ux = u(samples);
    let mut sum = 0.0;
    let mut count = 0usize;
    for x in 0..p.len() {
        if p[x] >= t {
            sum += ux[x];
            count += 1;
        }
    }
    (count > 0).then(|| sum / count as f64)
}

/// Average 1-based ranks by counting smaller and equal values.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

/// Pearson correlation of the rank vectors.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx).powi(2);
        syy += (ry[i] - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

/// Two-sided p-value of the t statistic, integrating the Student t density
/// with composite Simpson's rule.
pub fn t_test_p(rho: f64, n: usize) -> f64 {
    let df = (n - 2) as f64;
    let t = rho.abs() * (df / (1.0 - rho * rho)).sqrt();
    let ln_norm = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
    let density = |s: f64| (ln_norm - (df + 1.0) / 2.0 * (1.0 + s * s / df).ln()).exp();
    let steps = 200_000;
    let h = t / steps as f64;
    let mut acc = density(0.0) + density(t);
    for k in 1..steps {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * density(k as f64 * h);
    }
    let central = acc * h / 3.0;
    1.0 - 2.0 * central
}

/// Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = G[0];
    for (i, g) in G.iter().enumerate().skip(1) {
        a += g / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}
