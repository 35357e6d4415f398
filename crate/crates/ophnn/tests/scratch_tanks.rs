use ophnn::autodiff::Tensor;
use ophnn::cli::{build_model_and_encoder, train_config, ExperimentConfig};
use ophnn::datagen::tanks_surrogate_csv;
use ophnn::eval::{load_benchmark_csv, simulate_on_record};
use ophnn::nn::Mlp;
use ophnn::training::train;

fn scale_final_layer(net: &mut Mlp, s: f64) {
    let n = net.layers.len();
    let layer = &mut net.layers[n - 1];
    let data: Vec<f64> = layer.w.data().iter().map(|v| v * s).collect();
    layer.w = Tensor::matrix(layer.w.shape()[0], layer.w.shape()[1], data).unwrap();
}

#[test]
#[ignore]
fn probe_tanks_fixed2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tanks.csv");
    std::fs::write(&path, tanks_surrogate_csv(2024)).unwrap();
    let (train_ds, val_ds, test_ds) = load_benchmark_csv(&path).unwrap();
    let ymin = test_ds.y.flat().iter().cloned().fold(f64::INFINITY, f64::min);
    let ymax = test_ds.y.flat().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    eprintln!("DATA sigma {:.3} range [{:.2},{:.2}]", ophnn::eval::sigma_y(&test_ds.y), ymin, ymax);

    for seed in [1u64, 2] {
        let cfg = ExperimentConfig::parse(&format!(
            "seed = {seed}\n[model]\nnx = 2\nh_hidden = 8\na_hidden = 8\nb_hidden = 8\ng_hidden = 8\n[encoder]\nna = 4\nnb = 4\nhidden = 8\n[train]\ntruncation = 60\nbatch_size = 64\nlr = 1e-3\nmax_epochs = 1500\npatience = 200\n"
        )).unwrap();
        let (mut model, encoder) = build_model_and_encoder(&cfg, 1, 1).unwrap();
        for net in [&mut model.h_net, &mut model.a_net, &mut model.b_net, &mut model.g_net] {
            scale_final_layer(net, 1.0 / 40.0);
        }
        let tc = train_config(&cfg).unwrap();
        let t0 = std::time::Instant::now();
        let res = train(&train_ds, &val_ds, model, encoder, tc, |s, _| {
            if s.epoch % 150 == 0 { eprintln!("  seed {seed} epoch {:4} loss {:.3e} val {:.4}", s.epoch, s.train_loss, s.val_nrms); }
        }).unwrap();
        let ck = res.checkpoint;
        let sim = simulate_on_record(&ck, &test_ds, &ck.config.scheme, 1).unwrap();
        let m = sim.metrics(&test_ds).unwrap();
        eprintln!("seed {seed}: best {} TEST rms {:.4} nrms {:.4} [{:.0}s] {:?}", ck.epoch, m.rms, m.nrms, t0.elapsed().as_secs_f64(), res.outcome);
    }
}
