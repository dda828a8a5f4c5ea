use inkline_core::layout::{train_teacher_forcing, LayoutConfig, LayoutModel, LayoutSample, LayoutTrainConfig};
use inkline_core::metrics::{align_and_count, ar_cr, dtw_points};
use inkline_core::synth::{make_corpus, render_line, CorpusConfig, SyntheticWriter};
use inkline_core::Rng;
use proptest::prelude::*;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn layout_loss_drops_on_a_small_corpus() {
    let corpus = make_corpus(&CorpusConfig { writers: 2, lines_per_writer: 10, categories: 8, min_len: 6, max_len: 10, seed: 5 }).unwrap();
    let data: Vec<LayoutSample> =
        corpus.lines.iter().map(|l| LayoutSample::new(l.line.transcript(), l.layout.clone()).unwrap().with_writer(l.writer)).collect();
    let model = LayoutModel::new(LayoutConfig::new(8), 2);
    let config = LayoutTrainConfig { learning_rate: 0.01, batch: 8, seed: 2, augment: 1.0, context: 0.5 };
    let (_, history) = train_teacher_forcing(model, &data, config, 2000).unwrap();
    let (start, end) = (mean(&history[..20]), mean(&history[history.len() - 100..]));
    assert!(start > 5.0 * end, "start {start} end {end}");
}

#[test]
fn prefix_spacing_carries_into_generated_dx() {
    let corpus = make_corpus(&CorpusConfig { lines_per_writer: 30, ..CorpusConfig::default() }).unwrap();
    let data: Vec<LayoutSample> =
        corpus.lines.iter().map(|l| LayoutSample::new(l.line.transcript(), l.layout.clone()).unwrap().with_writer(l.writer)).collect();
    let config = LayoutTrainConfig { learning_rate: 0.01, batch: 32, seed: 4, augment: 1.0, context: 0.5 };
    let (model, _) = train_teacher_forcing(LayoutModel::new(LayoutConfig::new(20), 4), &data, config, 600).unwrap();
    let mut rng = Rng::new(8);
    let cats: Vec<usize> = (0..20).map(|_| rng.below(20)).collect();
    let mean_dx = |spacing_mu: f64| {
        let writer = SyntheticWriter { spacing_mu, spacing_sigma: 0.02, ..corpus.writers[0] };
        let (_, prefix) = render_line(&corpus.templates, &cats[..10], &writer, "p", 1).unwrap();
        let out = model.generate_in_context(&prefix.boxes, &cats[..10], &cats[10..]).unwrap();
        out.boxes.iter().map(|b| b.dx).sum::<f64>() / out.len() as f64
    };
    let (narrow, wide) = (mean_dx(0.1), mean_dx(0.5));
    assert!(wide > narrow, "narrow {narrow} wide {wide}");
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..15)
}

proptest! {
    #[test]
    fn dtw_is_symmetric_and_zero_on_itself(a in points(), b in points()) {
        let ab = dtw_points(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - dtw_points(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(dtw_points(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn edit_counts_reconcile_lengths(r in prop::collection::vec(0u8..4, 1..12), h in prop::collection::vec(0u8..4, 0..12)) {
        let c = align_and_count(&r, &h);
        prop_assert_eq!(c.n_total, r.len());
        prop_assert_eq!(r.len() - c.del + c.ins, h.len());
        prop_assert!(c.sub + c.del + c.ins <= r.len().max(h.len()));
        let (ar, cr) = ar_cr(&c).unwrap();
        prop_assert!(ar <= cr && cr <= 1.0);
        prop_assert!((cr - ar - c.ins as f64 / r.len() as f64).abs() < 1e-12);
    }
}
