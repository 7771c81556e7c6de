use proptest::prelude::*;

use mptcp_lab::equilibrium::{solve, Formulation, RateAllocation, SolveOptions};
use mptcp_lab::net_model::{build_scenario, Network, ScenarioSpec, Topology};
use mptcp_lab::stability::{assess, compute_burden, StabilityConfig, Threshold};

fn internet(seed: u64) -> Network {
    let topology = Topology::Internet {
        n_sources: 5,
        n_links: 6,
        paths_per_source: 2,
        capacity_min: 5.0,
        capacity_max: 20.0,
    };
    build_scenario(&ScenarioSpec::new(topology, seed)).unwrap()
}

fn formulation() -> impl Strategy<Value = Formulation> {
    prop_oneof![Just(Formulation::SinglePath), Just(Formulation::Coupled), Just(Formulation::Uncoupled)]
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solutions_are_feasible(seed in 0u64..1000, f in formulation(), floor in 0.01f64..0.2) {
        let net = internet(seed);
        let report = solve(&net, &SolveOptions::new(f, floor, 1e-8)).unwrap();
        let a = &report.allocation;
        for (y, l) in a.link_loads(&net).iter().zip(net.links()) {
            prop_assert!(*y <= l.capacity + 1e-9, "load {y} on capacity {}", l.capacity);
        }
        for p in net.paths() {
            if f.is_active(&net, p.id) {
                prop_assert!(a.rate(p.id) >= floor - 1e-12);
            } else {
                prop_assert_eq!(a.rate(p.id), 0.0);
            }
        }
    }

    #[test]
    fn log_optimum_scales_with_capacity(seed in 0u64..1000, f in formulation(), c in 0.25f64..4.0) {
        let net = internet(seed);
        let eps = 0.05;
        let base = solve(&net, &SolveOptions::new(f, eps, 1e-10)).unwrap().allocation;
        let big = solve(&net.scaled(c).unwrap(), &SolveOptions::new(f, c * eps, 1e-10)).unwrap().allocation;
        // Coupled splits may be degenerate; totals are not.
        let (x, y) = if f == Formulation::Coupled {
            (base.source_totals(&net), big.source_totals(&net))
        } else {
            (base.rates.clone(), big.rates.clone())
        };
        for (a, b) in x.iter().zip(&y) {
            prop_assert!(rel(c * a, *b) <= 1e-5, "{} vs {}", c * a, b);
        }
    }

    #[test]
    fn burden_total_equals_link_load_total(seed in 0u64..1000, rates in prop::collection::vec(0.0f64..50.0, 10)) {
        let net = internet(seed);
        let a = RateAllocation::new(rates);
        let loads: f64 = a.link_loads(&net).iter().sum();
        prop_assert!(rel(compute_burden(&net, &a).total(), loads) <= 1e-12);
    }

    #[test]
    fn assess_is_pure(seed in 0u64..1000, rates in prop::collection::vec(0.0f64..10.0, 10)) {
        let net = internet(seed);
        let x_star = solve(&net, &SolveOptions::new(Formulation::SinglePath, 0.01, 1e-8)).unwrap().allocation;
        let x_new = RateAllocation::new(rates);
        let cfg = StabilityConfig::default();
        prop_assert_eq!(assess(&net, &x_star, &x_new, &cfg), assess(&net, &x_star, &x_new, &cfg));
    }

    #[test]
    fn relaxing_bounds_never_breaks_a_verdict(
        seed in 0u64..1000,
        rates in prop::collection::vec(0.0f64..10.0, 10),
        b in 0.1f64..100.0,
        eps in 0.001f64..1.0,
    ) {
        let net = internet(seed);
        let x_star = solve(&net, &SolveOptions::new(Formulation::SinglePath, 0.01, 1e-8)).unwrap().allocation;
        let x_new = RateAllocation::new(rates);
        let tight = StabilityConfig { eps, burden_bound: Threshold::Absolute(b), ..StabilityConfig::default() };
        let loose = StabilityConfig { eps: eps / 2.0, burden_bound: Threshold::Absolute(2.0 * b), ..tight };
        let t = assess(&net, &x_star, &x_new, &tight).unwrap().constraint_verdicts;
        let l = assess(&net, &x_star, &x_new, &loose).unwrap().constraint_verdicts;
        prop_assert!(!t.floor_ok || l.floor_ok);
        prop_assert!(!t.burden_ok || l.burden_ok);
        prop_assert_eq!(t.capacity_ok, l.capacity_ok);
    }

    #[test]
    fn generators_are_deterministic_and_multipath(seed in any::<u64>(), pick in 0usize..3) {
        let topology = match pick {
            0 => Topology::Internet { n_sources: 6, n_links: 8, paths_per_source: 3, capacity_min: 1.0, capacity_max: 9.0 },
            1 => Topology::Datacenter { pods: 4, link_capacity: 10.0 },
            _ => Topology::Wireless {
                n_devices: 5,
                interfaces_per_device: 3,
                interface_capacity: 10.0,
                energy_cost: 0.1,
                energy_weight: 0.5,
            },
        };
        let spec = ScenarioSpec::new(topology, seed);
        let a = build_scenario(&spec).unwrap();
        prop_assert_eq!(&a, &build_scenario(&spec).unwrap());
        for s in a.sources() {
            prop_assert!(s.path_count() >= 2);
        }
    }
}
