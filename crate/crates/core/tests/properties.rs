use bids_core::baseline::{Hyperbox, NpPolicy};
use bids_core::geometry::{BinId, GridUnits, ProjectedInterval, Schedule, ScheduleParams};
use bids_core::metrics::{sample_points, RegretTrace};
use bids_core::policy::{threshold_u, BidsPolicy, Cover};
use bids_core::rng::{self, Stream};
use bids_core::sir::{combine_directions, perturb_direction, sin_angle, Direction};
use proptest::prelude::*;
use rand::Rng;

fn params() -> impl Strategy<Value = ScheduleParams> {
    (2u64..10_000_000, 2usize..9, 0.05f64..=1.0, 0.1f64..10.0, 0.01f64..20.0).prop_map(|(t, m, alpha, a, c)| {
        ScheduleParams {
            horizon: t,
            batches: m,
            alpha,
            a_scale: a,
            c_b: c,
            exponent: 3,
            grid_units: GridUnits::Normalized,
        }
    })
}

fn interval() -> impl Strategy<Value = ProjectedInterval> {
    (-20.0f64..20.0, 0.01f64..40.0).prop_map(|(l, w)| ProjectedInterval::new(l, l + w).unwrap())
}

fn unit_vec(dim: usize) -> impl Strategy<Value = Direction> {
    prop::collection::vec(-1.0f64..1.0, dim)
        .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
        .prop_map(|v| Direction::new(v).unwrap())
}

proptest! {
    #[test]
    fn schedule_shape(p in params(), i in interval()) {
        let s = Schedule::new(&p, i).unwrap();
        let m = p.batches;
        prop_assert_eq!(s.split_factors.len(), m - 1);
        prop_assert!(s.split_factors.iter().all(|&b| b >= 1));
        prop_assert!(s.split_factors.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(s.widths.len(), m);
        prop_assert_eq!(s.widths[m - 1], s.widths[m - 2]);
        prop_assert!(s.widths.windows(2).all(|w| w[1] <= w[0]));
        prop_assert_eq!(s.grid.len(), m + 1);
        prop_assert_eq!(s.grid[0], 0);
        prop_assert_eq!(s.grid[m], p.horizon);
        prop_assert!(s.grid.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn bins_nest_across_layers(p in params(), i in interval(), q in 0.0f64..=1.0) {
        let s = Schedule::new(&p, i).unwrap();
        let u = i.lower + q * i.width();
        let mut prev: Option<BinId> = None;
        for layer in 1..=p.batches {
            let b = s.bin_of(u, layer).unwrap();
            prop_assert!(b.index < s.layer_count(layer));
            let (lo, hi) = s.extent(b);
            prop_assert!(lo - 1e-9 * i.width() <= u && u <= hi + 1e-9 * i.width());
            if let Some(pb) = prev {
                prop_assert_eq!(s.parent_of(b), Some(pb));
                prop_assert!(s.children_of(pb).unwrap().contains(&b));
            }
            prev = Some(b);
        }
    }

    #[test]
    fn threshold_decreases_in_pulls(m in 1u64..1_000_000, t in 2u64..10_000_000, w in 0.001f64..10.0) {
        let a = threshold_u(m, t, w);
        let b = threshold_u(m + 1, t, w);
        prop_assert!(b <= a);
        prop_assert_eq!(threshold_u(0, t, w), f64::INFINITY);
    }

    #[test]
    fn sin_angle_is_a_sign_free_metric(u in unit_vec(4), v in unit_vec(4)) {
        let s = sin_angle(&u, &v);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - sin_angle(&v, &u)).abs() < 1e-12);
        let flipped = Direction::new(v.as_slice().iter().map(|x| -x).collect()).unwrap();
        prop_assert!((s - sin_angle(&u, &flipped)).abs() < 1e-12);
        prop_assert!(sin_angle(&u, &u) < 1e-15);
    }

    #[test]
    fn perturbation_hits_the_requested_angle(b in unit_vec(5), theta in 0.0f64..std::f64::consts::FRAC_PI_2, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let p = perturb_direction(&b, theta, &mut r).unwrap();
        prop_assert!((sin_angle(&b, &p) - theta.sin()).abs() < 1e-9);
    }

    #[test]
    fn fusion_ignores_signs(u in unit_vec(3), v in unit_vec(3), w in 0.05f64..0.95) {
        let plain = combine_directions(&[u.clone(), v.clone()], &[w, 1.0 - w]);
        let neg = Direction::new(v.as_slice().iter().map(|x| -x).collect()).unwrap();
        let flipped = combine_directions(&[u, neg], &[w, 1.0 - w]);
        match (plain, flipped) {
            (Ok(a), Ok(b)) => prop_assert!(sin_angle(&a, &b) < 1e-9),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn seeds_are_pure(master in any::<u64>(), i in 0usize..1000) {
        prop_assert_eq!(rng::replicate_seed(master, i), rng::replicate_seed(master, i));
        let s = rng::replicate_seed(master, i);
        prop_assert_ne!(rng::stream_seed(s, Stream::Noise), rng::stream_seed(s, Stream::Covariates));
    }

    #[test]
    fn trace_is_monotone(gaps in prop::collection::vec(0.0f64..2.0, 1..300)) {
        let mut t = RegretTrace::default();
        gaps.iter().for_each(|&g| t.push(g));
        prop_assert!(t.cumulative.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(t.inferior.iter().enumerate().all(|(i, &c)| c <= i as u64 + 1));
        let ts = sample_points(gaps.len(), 50);
        prop_assert_eq!(*ts.last().unwrap(), gaps.len());
        prop_assert!(ts.len() <= 50);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn elimination_keeps_an_active_arm(seed in any::<u64>(), arms in 2usize..5, gap in 0.0f64..1.0) {
        let params = ScheduleParams {
            c_b: 0.2,
            ..ScheduleParams::new(4000, 4, 1.0)
        };
        let s = Schedule::new(&params, ProjectedInterval::new(0.0, 1.0).unwrap()).unwrap();
        let mut p = BidsPolicy::bids(s, Direction::axis(1, 0), arms).unwrap();
        let mut r = rng::seeded(seed);
        for _ in 0..4000 {
            let x = [r.random::<f64>()];
            let arm = p.choose(&x).unwrap();
            match p.locate(&x).unwrap() {
                Cover::Live(b) => prop_assert!(p.live_bins()[&b].active.contains(&arm)),
                Cover::Frozen(_, a) => prop_assert_eq!(a, arm),
            }
            let mean = if arm == 0 { gap } else { 0.0 };
            for rep in p.observe(&x, arm, mean + 0.1 * (r.random::<f64>() - 0.5)).unwrap() {
                prop_assert!(!rep.survivors.is_empty());
                prop_assert!(rep.eliminated_arms.iter().all(|a| !rep.survivors.contains(a)));
            }
        }
        prop_assert!(p.live_bins().values().all(|b| !b.active.is_empty()));
    }

    #[test]
    fn unit_hypercube_matches_projection(seed in any::<u64>(), t in 500u64..5000, m in 2usize..6) {
        let params = ScheduleParams::new(t, m, 1.0);
        let region = Hyperbox::cube(1, -1.0, 2.0).unwrap();
        let mut np = NpPolicy::nonparametric(&params, region.clone(), 2).unwrap();
        let mut bids = BidsPolicy::bids(
            Schedule::new(&params, region.reference_interval().unwrap()).unwrap(),
            Direction::axis(1, 0),
            2,
        )
        .unwrap();
        let mut r = rng::seeded(seed);
        for _ in 0..t {
            let x = [-1.0 + 3.0 * r.random::<f64>()];
            let a = np.choose(&x).unwrap();
            prop_assert_eq!(a, bids.choose(&x).unwrap());
            let y = if x[0] > 0.5 { a as f64 } else { 1.0 - a as f64 } + 0.2 * r.random::<f64>();
            let ra = np.observe(&x, a, y).unwrap();
            let rb = bids.observe(&x, a, y).unwrap();
            prop_assert_eq!(ra.len(), rb.len());
        }
    }
}
