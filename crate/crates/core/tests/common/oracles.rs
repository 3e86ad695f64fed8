//! Slow, obviously-correct reference implementations.

/// Textbook ApEn: explicit template comparison for every pair and length.
pub fn apen_brute(s: &[f64], m: usize, r: f64) -> f64 {
    let n = s.len();
    let phi = |k: usize| -> f64 {
        if k == 0 {
            return 0.0;
        }
        let templates = n - k + 1;
        let mut total = 0.0;
        for i in 0..templates {
            let mut c = 0usize;
            for j in 0..templates {
                let dist = (0..k).map(|l| (s[i + l] - s[j + l]).abs()).fold(0.0, f64::max);
                if dist <= r {
                    c += 1;
                }
            }
            total += (c as f64 / templates as f64).ln();
        }
        total / templates as f64
    };
    phi(m) - phi(m + 1)
}

/// `max_x |F_a(x) - F_b(x)|` evaluated at every observed point.
pub fn ks_d_brute(a: &[f64], b: &[f64]) -> f64 {
    let ecdf = |v: &[f64], x: f64| v.iter().filter(|&&y| y <= x).count() as f64 / v.len() as f64;
    a.iter()
        .chain(b)
        .map(|&x| (ecdf(a, x) - ecdf(b, x)).abs())
        .fold(0.0, f64::max)
}

fn d_scaled(in_a: &[bool], m: usize, n: usize) -> i64 {
    let (mut i, mut j, mut d) = (0i64, 0i64, 0i64);
    for &x in in_a {
        if x {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i * n as i64 - j * m as i64).abs());
    }
    d
}

/// Exact permutation p-value by enumerating every split of the pooled,
/// tie-free sample. Exponential; keep `m + n` small.
pub fn ks_exact_enumerate(a: &[f64], b: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let mut pooled: Vec<(f64, bool)> = a.iter().map(|&x| (x, true)).chain(b.iter().map(|&x| (x, false))).collect();
    pooled.sort_by(|x, y| x.0.total_cmp(&y.0));
    let observed: Vec<bool> = pooled.iter().map(|p| p.1).collect();
    let d_obs = d_scaled(&observed, m, n);

    let total_len = m + n;
    let (mut hits, mut total) = (0u64, 0u64);
    let mut mask = vec![false; total_len];
    // Iterate all m-subsets via bitmask over positions.
    for bits in 0u64..(1u64 << total_len) {
        if bits.count_ones() as usize != m {
            continue;
        }
        for (k, slot) in mask.iter_mut().enumerate() {
            *slot = bits >> k & 1 == 1;
        }
        total += 1;
        if d_scaled(&mask, m, n) >= d_obs {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

/// Two-pass mean and n-1 standard deviation.
pub fn mean_std_two_pass(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, if v.len() > 1 { (ss / (n - 1.0)).sqrt() } else { 0.0 })
}

/// Type-7 quantile from a freshly sorted copy.
pub fn quantile_sort(v: &[f64], p: f64) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let h = (s.len() - 1) as f64 * p;
    let (lo, frac) = (h.floor() as usize, h.fract());
    if lo + 1 < s.len() {
        s[lo] * (1.0 - frac) + s[lo + 1] * frac
    } else {
        s[lo]
    }
}

/// 5-vs-5 t-test fixture evaluated at 50 significant digits. The samples
/// are the nearest doubles to the literals below.
pub const T_FIXTURE_A: [f64; 5] = [4.17, 5.02, 3.88, 6.11, 4.95];
pub const T_FIXTURE_B: [f64; 5] = [5.93, 6.40, 7.12, 5.51, 6.87];
pub const T_FIXTURE_WELCH: (f64, f64, f64) = (-3.152245145978854753, 7.463037428618809078, 0.01481446607168745629);
pub const T_FIXTURE_POOLED: (f64, f64, f64) = (-3.152245145978854753, 8.0, 0.01355250562400649501);
