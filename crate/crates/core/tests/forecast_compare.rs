mod common;

use common::*;
use shapesim::forecast::{evaluate_forecasters, EvalRow, Forecaster, ForecasterKind, KernelKind};
use shapesim::par::Parallelism;
use shapesim::workload::PatternKind;

fn pooled_mean(rows: &[EvalRow], kind: &ForecasterKind) -> f64 {
    let (kernel, h) = match kind {
        ForecasterKind::Gp(c) => (c.kernel.name(), c.history),
        _ => ("", 0),
    };
    rows.iter()
        .find(|r| r.series_id == "all" && r.kernel == kernel && r.h == h && r.kind == kind.label())
        .expect("pooled row")
        .mean
}

#[test]
fn exponential_kernel_beats_rbf_on_spiky_series() {
    let corpus = corpus(PatternKind::Spiky, 100, 120, 21);
    let exp = ForecasterKind::gp(KernelKind::Exponential, 10);
    let rbf = ForecasterKind::gp(KernelKind::Rbf, 10);
    let rows = evaluate_forecasters(&corpus, &[exp, rbf], Parallelism::default()).unwrap();
    let (e, r) = (pooled_mean(&rows, &exp), pooled_mean(&rows, &rbf));
    println!("spiky h=10: exponential {e:.5}, rbf {r:.5}");
    assert!(e <= r);
}

#[test]
fn longer_history_helps_on_periodic_series() {
    let corpus = corpus(PatternKind::Periodic, 100, 160, 22);
    let h10 = ForecasterKind::gp(KernelKind::Exponential, 10);
    let h40 = ForecasterKind::gp(KernelKind::Exponential, 40);
    let rows = evaluate_forecasters(&corpus, &[h10, h40], Parallelism::default()).unwrap();
    let (a, b) = (pooled_mean(&rows, &h10), pooled_mean(&rows, &h40));
    println!("periodic: h=10 {a:.5}, h=40 {b:.5}");
    assert!(b <= a);
}

#[test]
fn gp_tracks_a_constant_profile() {
    let reservation = 8192.0;
    let mut f = Forecaster::new(&ForecasterKind::default(), reservation, None).unwrap();
    for t in 0..11 {
        assert_eq!(f.predict().mean, reservation, "warm-up returns the reservation");
        f.observe(t, 0.4 * reservation).unwrap();
    }
    for t in 11..40 {
        let p = f.predict();
        assert!((p.mean - 0.4 * reservation).abs() <= 0.02 * 0.4 * reservation, "tick {t}: {}", p.mean);
        f.observe(t, 0.4 * reservation).unwrap();
    }
}

#[test]
fn replaying_a_prefix_reproduces_the_state() {
    let series = &corpus(PatternKind::Ramp, 1, 80, 23)[0];
    for kind in [ForecasterKind::default(), ForecasterKind::ari()] {
        let mut a = Forecaster::new(&kind, 1.0, None).unwrap();
        let mut preds = Vec::new();
        for (t, v) in series.values.iter().enumerate() {
            a.observe(t as u64, *v).unwrap();
            preds.push(a.predict());
        }
        for cut in [12, 40, 79] {
            let mut b = Forecaster::new(&kind, 1.0, None).unwrap();
            for (t, v) in series.values[..=cut].iter().enumerate() {
                b.observe(t as u64, *v).unwrap();
            }
            assert_eq!(b.predict(), preds[cut]);
        }
    }
}

#[test]
fn evaluation_ignores_parallelism() {
    let corpus = corpus(PatternKind::Spiky, 12, 60, 24);
    let kinds = [ForecasterKind::gp(KernelKind::Rbf, 5), ForecasterKind::ari(), ForecasterKind::Oracle];
    let seq = evaluate_forecasters(&corpus, &kinds, Parallelism::Sequential).unwrap();
    let par = evaluate_forecasters(&corpus, &kinds, Parallelism::Threads(4)).unwrap();
    assert_eq!(seq, par);
    assert!(seq.iter().filter(|r| r.kind == "oracle").all(|r| r.max == 0.0));
}
