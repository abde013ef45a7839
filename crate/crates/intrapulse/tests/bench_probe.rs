#[test]
fn probe_batch_speed() {
    use intrapulse::net::{AdamConfig, AdamState, Batch, BranchMode, FusionNet};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    let mut net = FusionNet::new(7, 256, 32, BranchMode::Fused, 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut batch = Batch::with_k(256);
    let b = 128;
    for _ in 0..b {
        batch.tfis.extend((0..128 * 256).map(|_| rng.gen::<f64>()));
        batch.pjvs.extend((0..256).map(|_| rng.gen::<f64>()));
        batch.labels.push(rng.gen_range(0..7));
    }
    let mut adam = AdamState::new(&net, AdamConfig::default());
    let t0 = std::time::Instant::now();
    let (_, _, g) = net.loss_and_grads(&batch).unwrap();
    adam.step(&mut net, &g);
    let dt = t0.elapsed();
    eprintln!("batch of {b}: {:?} total, {:.2} ms/sample fwd+bwd", dt, dt.as_secs_f64() * 1000.0 / b as f64);

    let t0 = std::time::Instant::now();
    for i in 0..b {
        let _ = net.forward(batch.tfi_of(i), batch.pjv_of(i));
    }
    let dt = t0.elapsed();
    eprintln!("forward only: {:.2} ms/sample", dt.as_secs_f64() * 1000.0 / b as f64);
}
