//! Frequency-domain spectrum against the dense SVD of the explicit operator.

use spconv::compare::{compare_multisets, ORACLE};
use spconv::dense::{build_dense_operator, dense_spectrum, dense_spectrum_of};
use spconv::random::{identity_kernel, random_kernel};
use spconv::spectrum::{clip_spectrum, spectrum, spectrum_len};
use spconv::tensor::pad_kernel;

fn check(k: usize, c_in: usize, c_out: usize, s: usize, n: usize, seed: u64) {
    let kern = random_kernel(k, c_in, c_out, s, n, seed).unwrap();
    let fast = spectrum(&kern).unwrap();
    let slow = dense_spectrum_of(&kern).unwrap();
    assert_eq!(fast.len(), spectrum_len(c_in, c_out, s, n));
    let cmp = compare_multisets(fast.values(), slow.values(), ORACLE);
    assert!(
        cmp.passed,
        "k={k} c_in={c_in} c_out={c_out} s={s} n={n} seed={seed}: {cmp:?}"
    );
}

#[test]
fn identity_has_unit_spectrum() {
    let sp = spectrum(&identity_kernel(1, 1, 4).unwrap()).unwrap();
    assert_eq!(sp.values(), &[1.0; 16]);
}

#[test]
fn unstrided_example() {
    check(3, 2, 3, 1, 4, 100);
}

#[test]
fn strided_example() {
    check(3, 3, 2, 2, 8, 101);
    check(3, 2, 2, 2, 4, 102);
}

#[test]
fn grid() {
    for n in [4, 6, 8] {
        for k in 1..=3 {
            for c_in in 1..=3 {
                for c_out in 1..=3 {
                    for s in [1, 2] {
                        if n % s == 0 {
                            check(
                                k,
                                c_in,
                                c_out,
                                s,
                                n,
                                (n * 1000 + k * 100 + c_in * 10 + c_out) as u64,
                            );
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn stride_three_and_wide_phase_matrices() {
    // s^2 * c_in > c_out and s^2 * c_in < c_out both occur
    check(3, 1, 4, 3, 6, 7);
    check(2, 3, 1, 3, 6, 8);
}

#[test]
fn clipped_expanded_kernel_is_clipped_on_the_oracle() {
    let kern = random_kernel(3, 4, 4, 1, 8, 55).unwrap();
    let sigma1 = spectrum(&kern).unwrap().sigma1();
    let kern = kern.scaled(3.0 / sigma1).unwrap();
    let before = dense_spectrum_of(&kern).unwrap();
    let clipped = clip_spectrum(&kern, 1.0).unwrap();
    let op = build_dense_operator(&clipped.expanded_kernel().unwrap()).unwrap();
    let after = dense_spectrum(&op).unwrap();
    assert!((after.sigma1() - 1.0).abs() < 1e-8);
    let expected: Vec<f64> = before.values().iter().map(|v| v.min(1.0)).collect();
    let cmp = compare_multisets(after.values(), &expected, ORACLE);
    assert!(cmp.passed, "{cmp:?}");
}

#[test]
fn clip_idempotence() {
    let kern = random_kernel(3, 3, 2, 2, 8, 56).unwrap();
    let once = clip_spectrum(&kern, 0.5 * spectrum(&kern).unwrap().sigma1()).unwrap();
    let delta = 0.5 * spectrum(&kern).unwrap().sigma1();
    let twice = clip_spectrum(&once.expanded_kernel().unwrap(), delta).unwrap();
    assert!(twice.expanded.max_abs_diff(&once.expanded).unwrap() < 1e-8);
    // the untouched kernel is recovered when nothing exceeds the threshold
    let same = clip_spectrum(&kern, 1e6).unwrap();
    assert!(
        same.expanded
            .max_abs_diff(&pad_kernel(&kern).unwrap())
            .unwrap()
            < 1e-10
    );
}
