// scratch: timing + learning-direction probe (deleted before final commit)
use buslab_reward::preset_with_ideal;
use buslab_rl::{run_test, GreedyPolicy, StateNormalizer, TrainConfig};
use buslab_sim::*;

fn case1_like(seed: u64) -> ScenarioConfig {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(seed, "case1-rates", 0));
    let mut s = ScenarioConfig {
        lines: vec![LineConfig {
            line_id: LineId(0),
            route_length_m: 10656.0,
            circular: true,
            departure_interval_s: 320,
            fleet_size: Some(6),
            stops: (0..8)
                .map(|i| LineStop { stop_id: StopId(i), position_m: 666.0 + 1332.0 * i as f64 })
                .collect(),
            travel_time: TravelTimeModel::Constant { speed_mps: 5.55 },
        }],
        stops: vec![],
        capacity: None,
        board_time_per_pax: 3.0,
        alight_time_per_pax: 0.0,
        sim_duration_s: 14400,
        action_step_s: 5,
        max_hold_s: 90,
        demand: DemandProfile {
            hourly_multipliers: vec![0.6, 0.8, 1.2, 0.5],
            entries: (0..8)
                .map(|i| DemandEntry {
                    stop_id: StopId(i),
                    line_id: LineId(0),
                    rate_per_h: RateSpec::Flat(rng.gen_range(40.0..180.0)),
                })
                .collect(),
        },
        shared_passenger_fraction: 0.0,
        seed,
    };
    s.refresh_stops();
    s
}

fn main() {
    let s = case1_like(1);
    let episodes: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(10);
    let program = preset_with_ideal("local", s.mean_ideal_headway_m()).unwrap();
    let cfg = TrainConfig { episodes, seed: 5, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let result = buslab_rl::run_training::<f32>(&s, &program, &cfg).unwrap();
    println!("trained {episodes} episodes in {:.1?}s", t0.elapsed().as_secs_f64());
    let n = result.evol.len();
    let head: f64 = result.evol[..5.min(n)].iter().sum::<f64>() / 5.0f64.min(n as f64);
    let tail: f64 = result.evol[n.saturating_sub(5)..].iter().sum::<f64>() / 5.0f64.min(n as f64);
    println!("evol head {head:.2} tail {tail:.2}");
    println!("evol: {:?}", result.evol.iter().map(|x| *x as i64).collect::<Vec<_>>());

    let norm = StateNormalizer::from_scenario(&s);
    for test_seed in [101u64, 102] {
        let mut policy = GreedyPolicy { net: &result.net, norm };
        let (_, m) = run_test(&s, &program, &mut policy, test_seed).unwrap();
        let mut env = Env::new(&s, test_seed);
        env.run(&mut NoHolding, |_| {});
        let none = env.metrics();
        let mut env2 = Env::new(&s, test_seed);
        let mut fb = buslab_control::FeedbackController;
        env2.run(&mut fb, |_| {});
        let fbm = env2.metrics();
        println!(
            "seed {test_seed}: RL  ATT {:.1} WT {:.1} SD {:.1} HT {:.1}",
            m.overall.avg_travel_time,
            m.overall.avg_waiting_time,
            m.per_line[0].sd_time_headways,
            m.per_line[0].avg_holding_time
        );
        println!(
            "          none ATT {:.1} WT {:.1} SD {:.1} | fb ATT {:.1} WT {:.1} SD {:.1} HT {:.1}",
            none.overall.avg_travel_time,
            none.overall.avg_waiting_time,
            none.per_line[0].sd_time_headways,
            fbm.overall.avg_travel_time,
            fbm.overall.avg_waiting_time,
            fbm.per_line[0].sd_time_headways,
            fbm.per_line[0].avg_holding_time
        );
    }
}
