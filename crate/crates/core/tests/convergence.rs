use nalgebra::{dvector, DMatrix, DVector};
use noisy_formation::channel::ChannelParams;
use noisy_formation::control::{ControlConfig, GainSchedule};
use noisy_formation::engine::{FormationSpec, MonteCarloOptions, Network, NoiseMode};
use noisy_formation::graph::Graph;

fn network(horizon: usize, p: f64) -> Network {
    let graph = Graph::new(3, &[(0, 1), (1, 2)]).unwrap();
    let formation = FormationSpec::new(&graph, &[(0, 1, dvector![-10.0, -10.0]), (1, 2, dvector![-10.0, 10.0])]).unwrap();
    let cfg = ControlConfig::homogeneous(3, DMatrix::identity(2, 2) * 8.0, DMatrix::identity(2, 2) * 3.0, 10, 1.0).unwrap();
    let c_values: Vec<f64> = (0..horizon).map(|t| 1.0 / (7.0 * ((t + 1) as f64).powf(p))).collect();
    Network {
        gains: GainSchedule::compute(&cfg, &graph, &c_values).unwrap(),
        channel: ChannelParams::uniform(2, 0.01, vec![0.1; 3], 1.0).unwrap(),
        graph,
        formation,
        c_values,
    }
}

fn x0() -> Vec<DVector<f64>> {
    vec![dvector![1.0, 19.0], dvector![14.0, 10.0], dvector![20.0, 21.0]]
}

#[test]
fn noise_free_error_is_non_increasing() {
    let log = network(200, 1.26).run(&x0(), 200, NoiseMode::Zero).unwrap();
    assert!(log.xi_sq.windows(2).all(|w| w[1] <= w[0]));
    // c ∈ ℓ1 stalls the noise-free contraction before reaching zero
    assert!(log.xi_sq[200] < 1e-3 * log.xi_sq[0]);
}

#[test]
fn realised_variance_never_below_receiver_floor() {
    let log = network(100, 1.26).run(&x0(), 100, NoiseMode::Channel { run_seed: 5 }).unwrap();
    assert_eq!(log.min_variance.len(), 100);
    assert!(log.min_variance.iter().all(|&v| v >= 0.1));
    // early on agents are far apart and the state-dependent term dominates
    assert!(log.min_variance[0] > 0.1 + 0.01 * 100.0);
}

#[test]
fn zero_mean_drift_for_square_summable_gains() {
    let net = network(400, 0.9);
    let opts = MonteCarloOptions {
        runs: 600,
        horizon: 400,
        base_seed: 77,
        zero_noise: false,
        threads: None,
        tail_window: None,
    };
    let stats = net.monte_carlo(&x0(), &opts).unwrap();
    for (m, se) in stats.mean_xi_final.iter().zip(&stats.stderr_xi_final) {
        assert!(m.abs() <= 4.0 * se, "mean {m}, se {se}");
    }
    assert!(stats.mean_sq[400] < 0.01 * stats.mean_sq[0]);
}
