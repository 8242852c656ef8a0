use precis::synth;
use precis::trainer::Mode;
use std::time::Instant;

#[test]
#[ignore]
fn scratch() {
    let synth_cfg = synth::SynthConfig::default();
    let mut base = synth::train_config(Mode::Wgan, 42);
    base.g_lr = 1e-3;
    let t0 = Instant::now();
    let setup = synth::prepare(&synth_cfg, &base, 42).unwrap();
    println!("prepare: {:.1}s pre_f1={:.4} lead8={:.4}", t0.elapsed().as_secs_f64(), setup.pretrained_f1, setup.lead_f1);

    for mode in [Mode::Wgan, Mode::AdvReinforce] {
        let mut cfg = synth::train_config(mode, 42);
        cfg.g_lr = 1e-3;
        for target in [200usize, 400, 600] {
            cfg.max_updates = target;
            let t1 = Instant::now();
            let rep = synth::run_mode(&setup, cfg.clone()).unwrap();
            println!("{mode} u={target}: {:.0}s f1={:.4}", t1.elapsed().as_secs_f64(), rep.trained_f1);
            if target == 600 {
                for rec in rep.state.metrics.iter().step_by(150) { println!("  {rec}"); }
            }
        }
    }
}
