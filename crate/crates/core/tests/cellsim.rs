use proptest::prelude::*;
use wsrm::cellsim::*;

proptest! {
    #[test]
    fn pathgain_is_nonincreasing(a in 0.001f64..2.0, b in 0.001f64..2.0) {
        let pl = PathLoss::default();
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(pathgain(near, &pl) >= pathgain(far, &pl));
    }

    #[test]
    fn db_round_trip(x in -80.0f64..80.0) {
        prop_assert!((linear_to_db(db_to_linear(x)) - x).abs() < 1e-9);
    }

    #[test]
    fn queues_and_departures_stay_consistent(
        rates in proptest::collection::vec(proptest::collection::vec(0.0f64..5.0, 3), 1..40),
        a_max in 0.0f64..4.0,
    ) {
        let mut st = SchedulerState::new(3, 100.0, 1e-3, 20.0, a_max);
        for r in &rates {
            let before = st.queues.clone();
            let a = st.arrival();
            let dep = st.update(r);
            for k in 0..3 {
                prop_assert!(st.queues[k] >= 0.0);
                prop_assert!(dep[k] <= r[k] + 1e-12);
                prop_assert!((before[k] + a - dep[k] - st.queues[k]).abs() < 1e-9);
            }
        }
        let w = schedule_weights(&st, Scheduler::Hfs);
        prop_assert_eq!(w, st.queues.clone());
    }
}

fn short(scheme: Scheme, scheduler: Scheduler, precoder: PrecoderKind) -> SimConfig {
    SimConfig { scheme, scheduler, precoder, slots: 30, seed: 9, ..SimConfig::default() }
}

#[test]
fn every_scheme_runs_and_reports_all_users() {
    for scheme in [Scheme::Coordinated, Scheme::Reuse1, Scheme::Ffr { rho: 0.0 }, Scheme::Ffr { rho: 0.5 }] {
        for scheduler in [Scheduler::Pfs, Scheduler::Hfs] {
            let cfg = short(scheme, scheduler, PrecoderKind::Zf);
            let r = run_simulation(&cfg).unwrap();
            assert_eq!(r.users.len(), 2 * cfg.users);
            assert!(r.users.iter().all(|u| u.long_term_rate.is_finite() && u.long_term_rate >= 0.0));
            assert!(r.max_power_ratio <= 1.0 + 1e-6, "{scheme:?}: {}", r.max_power_ratio);
            assert_eq!(r.to_csv().lines().count(), 2 * cfg.users + 1);
        }
    }
}

#[test]
fn coordination_respects_epsilon() {
    let cfg = short(Scheme::Coordinated, Scheduler::Pfs, PrecoderKind::Dpc);
    let r = run_simulation(&cfg).unwrap();
    assert!(r.max_ici.unwrap() <= cfg.epsilon + 1e-6);
    assert_eq!(r.skipped_slots, 0);
}

#[test]
fn pfs_rates_are_served_rates() {
    let r = run_simulation(&short(Scheme::Reuse1, Scheduler::Pfs, PrecoderKind::Dpc)).unwrap();
    for u in &r.users {
        assert_eq!(u.long_term_rate, u.service_rate);
    }
}

#[test]
fn same_seed_same_csv() {
    let cfg = short(Scheme::Ffr { rho: 0.0 }, Scheduler::Hfs, PrecoderKind::Dpc);
    assert_eq!(run_simulation(&cfg).unwrap().to_csv(), run_simulation(&cfg).unwrap().to_csv());
}
