use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Kendall tau-b together with the pair counts it was computed from.
///
/// `ties_x` counts pairs tied in `x` only and `ties_y` pairs tied in `y`
/// only; pairs tied in both are in neither.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementResult {
    pub tau: f64,
    pub n: usize,
    pub concordant: u64,
    pub discordant: u64,
    pub ties_x: u64,
    pub ties_y: u64,
}

impl AgreementResult {
    /// Builds the result from exact pair counts. Errors when either side has
    /// no untied pairs.
    pub fn from_counts(
        n: usize,
        concordant: u64,
        discordant: u64,
        ties_x: u64,
        ties_y: u64,
    ) -> Result<Self, MetricsError> {
        // n0 - n1 and n0 - n2 in the usual notation
        let untied_x = concordant + discordant + ties_y;
        let untied_y = concordant + discordant + ties_x;
        if untied_x == 0 {
            return Err(MetricsError::DegenerateInput { which: "x" });
        }
        if untied_y == 0 {
            return Err(MetricsError::DegenerateInput { which: "y" });
        }
        let numer = concordant as i128 - discordant as i128;
        let denom = ((untied_x as f64) * (untied_y as f64)).sqrt();
        Ok(Self {
            tau: (numer as f64 / denom).clamp(-1.0, 1.0),
            n,
            concordant,
            discordant,
            ties_x,
            ties_y,
        })
    }
}

fn check_inputs(x: &[f64], y: &[f64]) -> Result<(), MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooShort { needed: 2, got: x.len() });
    }
    if let Some(index) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite { index: index % x.len() });
    }
    Ok(())
}

fn cmp(a: f64, b: f64) -> Ordering {
    // inputs are finite, so partial_cmp never fails; 0.0 and -0.0 compare equal
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn tied_pairs(run: u64) -> u64 {
    run * run.saturating_sub(1) / 2
}

/// Sum of tied pairs over runs of equal keys in an already sorted sequence.
fn count_ties<I: Iterator<Item = K>, K: Copy, F: Fn(K, K) -> bool>(mut it: I, eq: F) -> u64 {
    let Some(mut prev) = it.next() else { return 0 };
    let mut run = 1u64;
    let mut total = 0;
    for cur in it {
        if eq(prev, cur) {
            run += 1;
        } else {
            total += tied_pairs(run);
            run = 1;
        }
        prev = cur;
    }
    total + tied_pairs(run)
}

/// Merge sort on `ys` counting inversions (strictly greater before smaller).
fn sort_counting_swaps(ys: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = ys.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = ys.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_counting_swaps(l, bl) + sort_counting_swaps(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(ys[j], ys[i]) == Ordering::Less {
            buf[k] = ys[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = ys[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&ys[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&ys[j..n]);
    ys.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b in O(n log n) (Knight's algorithm). Pair counts are
/// exact integers; the only floating-point step is the final division.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<AgreementResult, MetricsError> {
    check_inputs(x, y)?;
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| cmp(x[a], x[b]).then_with(|| cmp(y[a], y[b])));

    let n0 = tied_pairs(n as u64);
    let n1 = count_ties(idx.iter().map(|&i| x[i]), |a, b| cmp(a, b).is_eq());
    let n3 = count_ties(idx.iter().map(|&i| (x[i], y[i])), |a, b| {
        cmp(a.0, b.0).is_eq() && cmp(a.1, b.1).is_eq()
    });

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = sort_counting_swaps(&mut ys, &mut buf);
    let n2 = count_ties(ys.iter().copied(), |a, b| cmp(a, b).is_eq());

    let ties_x = n1 - n3;
    let ties_y = n2 - n3;
    let concordant = n0 + n3 - n1 - n2 - discordant;
    AgreementResult::from_counts(n, concordant, discordant, ties_x, ties_y)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Direct O(n^2) enumeration of every pair.
    pub(crate) fn brute_force(x: &[f64], y: &[f64]) -> Result<AgreementResult, MetricsError> {
        let (mut c, mut d, mut tx, mut ty) = (0u64, 0u64, 0u64, 0u64);
        for i in 0..x.len() {
            for j in i + 1..x.len() {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                match (dx == 0.0, dy == 0.0) {
                    (true, true) => {}
                    (true, false) => tx += 1,
                    (false, true) => ty += 1,
                    _ if (dx > 0.0) == (dy > 0.0) => c += 1,
                    _ => d += 1,
                }
            }
        }
        AgreementResult::from_counts(x.len(), c, d, tx, ty)
    }

    #[test]
    fn perfect_concordance() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(kendall_tau_b(&v, &v).unwrap().tau, 1.0);
    }

    #[test]
    fn one_swap_of_four() {
        let r = kendall_tau_b(&[1., 2., 3., 4.], &[1., 3., 2., 4.]).unwrap();
        assert_eq!((r.concordant, r.discordant), (5, 1));
        assert!((r.tau - 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn tie_corrected() {
        // pairs: (0,1) tied x; (0,2) concordant; (1,2) tied y
        let r = kendall_tau_b(&[1., 1., 2.], &[1., 2., 2.]).unwrap();
        assert_eq!((r.concordant, r.discordant, r.ties_x, r.ties_y), (1, 0, 1, 1));
        assert_eq!(r.tau, 0.5);
    }

    #[test]
    fn errors() {
        assert_eq!(
            kendall_tau_b(&[1., 2.], &[1.]),
            Err(MetricsError::LengthMismatch { left: 2, right: 1 })
        );
        assert_eq!(
            kendall_tau_b(&[3., 3., 3.], &[1., 2., 3.]),
            Err(MetricsError::DegenerateInput { which: "x" })
        );
        assert_eq!(
            kendall_tau_b(&[1., 2., 3.], &[0., 0., 0.]),
            Err(MetricsError::DegenerateInput { which: "y" })
        );
        assert!(matches!(kendall_tau_b(&[1.0], &[1.0]), Err(MetricsError::TooShort { .. })));
        assert!(matches!(
            kendall_tau_b(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(MetricsError::NonFinite { index: 1 })
        ));
    }

    #[test]
    fn matches_brute_force_on_seeded_inputs() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let n = rng.gen_range(2..120);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..6) as f64 * 0.5).collect();
            match (kendall_tau_b(&x, &y), brute_force(&x, &y)) {
                (Ok(a), Ok(b)) => assert_eq!(a, b),
                (Err(a), Err(b)) => assert_eq!(a, b),
                (a, b) => panic!("{a:?} vs {b:?}"),
            }
        }
    }

    fn series() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..40).prop_flat_map(|n| {
            (
                proptest::collection::vec(-5i32..5, n),
                proptest::collection::vec(-5i32..5, n),
            )
                .prop_map(|(a, b)| {
                    (a.into_iter().map(f64::from).collect(), b.into_iter().map(f64::from).collect())
                })
        })
    }

    proptest! {
        #[test]
        fn symmetric((x, y) in series()) {
            match (kendall_tau_b(&x, &y), kendall_tau_b(&y, &x)) {
                (Ok(a), Ok(b)) => {
                    prop_assert_eq!(a.tau, b.tau);
                    prop_assert_eq!((a.ties_x, a.ties_y), (b.ties_y, b.ties_x));
                }
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn reversal_negates((x, y) in series()) {
            let neg: Vec<f64> = x.iter().map(|v| -v).collect();
            if let (Ok(a), Ok(b)) = (kendall_tau_b(&x, &y), kendall_tau_b(&neg, &y)) {
                prop_assert_eq!(a.tau, -b.tau);
            }
        }

        #[test]
        fn monotone_transform_invariant((x, y) in series()) {
            let t: Vec<f64> = x.iter().map(|v| v.powi(3) * 2.0 + 7.0).collect();
            if let (Ok(a), Ok(b)) = (kendall_tau_b(&x, &y), kendall_tau_b(&t, &y)) {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn pair_counts_bounded((x, y) in series()) {
            if let Ok(r) = kendall_tau_b(&x, &y) {
                let n = r.n as u64;
                prop_assert!(r.concordant + r.discordant + r.ties_x + r.ties_y <= n * (n - 1) / 2);
                prop_assert!((-1.0..=1.0).contains(&r.tau));
            }
        }
    }
}
