use leach_rlc::clustering::{objective, optimal_assignment, solve_bruteforce, solve_exact, MilpWeights};
use leach_rlc::network::{potential_heads, NetworkState};
use leach_rlc::radio::RadioParams;
use leach_rlc::rng;
use rand::Rng;

fn state(positions: &[(f64, f64)], energies: &[f64]) -> NetworkState {
    let mut s = NetworkState::from_positions(positions, 0.5, (50.0, 175.0));
    for (n, &e) in s.nodes.iter_mut().zip(energies) {
        n.energy = e;
    }
    s
}

#[test]
fn member_prefers_the_cheaper_link_not_the_nearer_head() {
    let p = RadioParams::default();
    let d0 = p.threshold_distance();
    assert!(85.0 < d0 && d0 < 90.0);

    // Member at the origin, head 2 at 85 m (free space), head 3 at 90 m (multipath).
    let s = NetworkState::from_positions(&[(0.0, 0.0), (85.0, 0.0), (-90.0, 0.0)], 0.5, (0.0, 175.0));
    let via_85 = 2.0e-4 + 10e-12 * 4000.0 * 85.0 * 85.0;
    let via_90 = 2.0e-4 + 0.0013e-12 * 4000.0 * 90f64.powi(4);
    assert!((p.tx_energy(4000.0, 85.0) - via_85).abs() < 1e-15);
    assert!((p.tx_energy(4000.0, 90.0) - via_90).abs() < 1e-15);

    let expected = if via_85 <= via_90 { 2 } else { 3 };
    assert_eq!(optimal_assignment(&s, &p, &[2, 3]).unwrap()[&1], expected);
}

#[test]
fn eight_nodes_six_candidates_bruteforce_agrees_with_branch_and_bound() {
    let p = RadioParams::default();
    let mut r = rng::stream(8, "eight-node-example");
    let mut checked = 0;
    while checked < 25 {
        let pos: Vec<(f64, f64)> = (0..8).map(|_| (r.gen_range(0.0..100.0), r.gen_range(0.0..100.0))).collect();
        let energies: Vec<f64> = (0..8).map(|_| r.gen_range(0.1..0.5)).collect();
        let s = state(&pos, &energies);
        if potential_heads(&s).len() != 6 {
            continue;
        }
        let w = MilpWeights { alpha: r.gen_range(0.0..100.0), beta: r.gen_range(0.0..100.0), gamma: r.gen_range(0.0..100.0) };
        let a = solve_bruteforce(&s, &p, &w, 2).unwrap();
        let b = solve_exact(&s, &p, &w, 2).unwrap();
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.chs, b.chs);
        assert_eq!(a.chs.len(), 2);
        checked += 1;
    }
}

#[test]
fn reported_objective_matches_recomputation() {
    let p = RadioParams::default();
    let mut r = rng::stream(9, "objective-recompute");
    for _ in 0..20 {
        let pos: Vec<(f64, f64)> = (0..30).map(|_| (r.gen_range(0.0..100.0), r.gen_range(0.0..100.0))).collect();
        let energies: Vec<f64> = (0..30).map(|_| r.gen_range(0.05..0.5)).collect();
        let s = state(&pos, &energies);
        let sol = solve_exact(&s, &p, &MilpWeights::REFERENCE, 3).unwrap();
        let again = objective(&s, &p, &MilpWeights::REFERENCE, &sol.clustering()).unwrap();
        assert!((sol.objective - again).abs() <= 1e-12 * again.abs().max(1.0));
        let heads = potential_heads(&s);
        assert!(sol.chs.iter().all(|c| heads.contains(c)));
    }
}

#[test]
fn reference_scenario_solves_quickly() {
    use leach_rlc::network::{generate_topology, NetworkConfig};
    let s = generate_topology(&NetworkConfig::default());
    let t = std::time::Instant::now();
    let sol = solve_exact(&s, &RadioParams::default(), &MilpWeights::REFERENCE, 5).unwrap();
    assert_eq!(sol.chs.len(), 5);
    assert!(t.elapsed().as_secs_f64() < 0.91);
}
