use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsma360::experiment::{
    run_sweep, ExperimentConfig, ExperimentError, ScoreKind, SweepKind, CDF_CSV_HEADER, METRIC_CSV_HEADER,
    REWARD_CSV_HEADER, SWEEP_CSV_HEADER,
};
use rsma360::rl::train::{policy_shape, TRAIN_LOG_HEADER};
use rsma360::rl::{ActorCritic, Checkpoint};
use rsma360::rsma::Scheme;

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.env.channel.num_users = 2;
    cfg.env.episode_len = 10;
    cfg.eval_episodes = 2;
    cfg
}

fn random_checkpoint(cfg: &ExperimentConfig, scheme: Scheme, seed: u64) -> Checkpoint {
    let env = cfg.env_for(scheme);
    let shape = policy_shape(&env, &cfg.ppo);
    Checkpoint {
        ppo: cfg.ppo.clone(),
        env,
        update_counter: 0,
        policy: ActorCritic::new(shape, cfg.ppo.log_std_init, &mut ChaCha8Rng::seed_from_u64(seed)),
    }
}

#[test]
fn output_headers_are_stable() {
    assert_eq!(TRAIN_LOG_HEADER, "episode,mean_reward,actor_loss,critic_loss,grad_norm,noise_scale");
    assert_eq!(REWARD_CSV_HEADER, "episode,mean_reward,scheme,metric");
    assert_eq!(
        SWEEP_CSV_HEADER,
        "scheme,sweep,value,mean_reward,mean_total,mean_delay_score,mean_quality_score"
    );
    assert_eq!(CDF_CSV_HEADER, "scheme,sweep,value,score,threshold,fraction");
    assert_eq!(METRIC_CSV_HEADER, "name,ws_psnr_db,ws_ssim_db");
}

#[test]
fn defaults_follow_the_reference_settings() {
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.ppo.gamma, 0.4);
    assert_eq!(cfg.ppo.clip_eps, 0.1);
    assert_eq!(cfg.ppo.update_iters, 2);
    assert_eq!(cfg.ppo.update_horizon, 1000);
    assert_eq!(cfg.ppo.minibatch, 128);
    assert_eq!(cfg.ppo.learn_rate, 1e-4);
    assert_eq!(cfg.ppo.epochs, 150);
    assert_eq!(cfg.env.channel.bandwidth_hz, 200e6);
    assert_eq!(cfg.env.episode_len, 100);
    cfg.validate().unwrap();
    let text = serde_json::to_string(&cfg).unwrap();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    assert_eq!(ExperimentConfig::from_json("{}").unwrap(), cfg);
}

#[test]
fn bad_configs_name_the_problem() {
    let e = ExperimentConfig::from_json(r#"{"sweeps": {"kapa": [1.0]}}"#).unwrap_err();
    assert!(matches!(e, ExperimentError::Config(ref m) if m.contains("kapa")), "{e}");
    assert_eq!(e.exit_code(), 2);
    let e = ExperimentConfig::from_json(r#"{"sweeps": {"kappa": [3.0]}}"#).unwrap_err();
    assert!(e.to_string().contains("sweeps.kappa"), "{e}");
    let e = ExperimentConfig::from_json(r#"{"schemes": []}"#).unwrap_err();
    assert!(e.to_string().contains("schemes"));
    let e = ExperimentConfig::from_json(r#"{"schemes": ["tdma"]}"#).unwrap_err();
    assert!(e.to_string().contains("tdma"));
}

#[test]
fn hash_tracks_content() {
    let a = small();
    let mut b = small();
    assert_eq!(a.hash(), b.hash());
    b.seed += 1;
    assert_ne!(a.hash(), b.hash());
}

#[test]
fn sweeps_have_one_point_per_value() {
    let cfg = small();
    let cks = vec![
        random_checkpoint(&cfg, Scheme::Rsma, 1),
        random_checkpoint(&cfg, Scheme::Ofdma, 1),
    ];
    let pts = run_sweep(&cfg, &cks, Some(SweepKind::Kappa)).unwrap();
    assert_eq!(pts.len(), 6);
    assert_eq!(pts.iter().filter(|p| p.scheme == Scheme::Rsma).count(), 3);
    // Same policy and channel draws: κ only reweights the two components.
    for pair in pts.chunks(3) {
        let d: Vec<f64> = pair.iter().map(|p| p.summary.mean_delay_score()).collect();
        assert!(d.windows(2).all(|w| w[0] == w[1]));
    }

    let pts = run_sweep(&cfg, &cks[..1], Some(SweepKind::TMax)).unwrap();
    let cdfs: Vec<_> = pts.iter().map(|p| p.summary.cdf(ScoreKind::Delay)).collect();
    assert!(cdfs[1].dominates(&cdfs[0]) && cdfs[2].dominates(&cdfs[1]));

    let mut other = cfg.clone();
    other.env.channel.num_users = 3;
    assert!(matches!(
        run_sweep(&other, &cks[..1], None),
        Err(ExperimentError::Config(_))
    ));
}
