use surfi_core::synth::{self, CorpusProtocol, EventSpec, SynthSettings, LEFT_WRIST, RIGHT_WRIST};
use surfi_core::trace::Axis;
use surfi_core::{Analysis, Pipeline};

fn longest(a: &Analysis) -> &surfi_core::pipeline::EventReport {
    a.events
        .iter()
        .max_by(|x, y| x.window.duration().total_cmp(&y.window.duration()))
        .expect("at least one event")
}

#[test]
fn noise_free_matched_pairs_score_three() {
    let pipeline = Pipeline::default();
    let cases = [(0.6, 5.0, 25.0, LEFT_WRIST, Axis::Y), (1.0, 12.0, 30.0, RIGHT_WRIST, Axis::Y), (1.6, 8.0, 33.0, RIGHT_WRIST, Axis::X)];
    for (i, (freq, s, e, kp, axis)) in cases.into_iter().enumerate() {
        let mut spec = EventSpec::new(freq, s, e);
        spec.snr_db = f64::INFINITY;
        spec.keypoint_id = kp;
        spec.axis = axis;
        let (video, csi, _) = synth::gen_matched_pair(&spec, 40 + i as u64).unwrap();
        let a = pipeline.analyze(&video, &csi).unwrap();
        let ev = longest(&a);
        assert_eq!(ev.verdict.score, 3, "case {i}: {:?}", ev.attributes);
        let fv = ev.attributes.video.f.unwrap();
        let fc = ev.attributes.csi.f.unwrap();
        assert!((fv - freq).abs() <= 0.1 && (fc - freq).abs() <= 0.1, "case {i}: {fv} {fc}");
        assert!((ev.window.start_s - s).abs() <= 0.3 && (ev.window.end_s - e).abs() <= 0.3, "case {i}: {:?}", ev.window);
    }
}

#[test]
fn matched_pairs_at_20_db_score_three() {
    let pipeline = Pipeline::default();
    for seed in 0..6 {
        let freq = [0.6, 1.0, 1.6][seed as usize % 3];
        let spec = EventSpec::new(freq, 6.0 + seed as f64, 27.0 + seed as f64);
        let (video, csi, _) = synth::gen_matched_pair(&spec, seed).unwrap();
        let a = pipeline.analyze(&video, &csi).unwrap();
        assert_eq!(longest(&a).verdict.score, 3, "seed {seed}");
        assert_eq!(a.decision.unwrap().verdict, surfi_core::Verdict::Legitimate);
    }
}

#[test]
fn frequency_mismatched_attacks_fail_frequency_attribute() {
    let pipeline = Pipeline::default();
    let pairs = [(0.6, 1.0), (1.0, 0.6), (1.0, 1.6), (1.6, 1.0), (0.6, 1.6), (1.6, 0.6)];
    for (i, (fv, fc)) in pairs.into_iter().enumerate() {
        let mut video_spec = EventSpec::new(fv, 10.0, 30.0);
        let mut csi_spec = EventSpec::new(fc, 10.0, 30.0);
        video_spec.snr_db = f64::INFINITY;
        csi_spec.snr_db = f64::INFINITY;
        let (video, csi, truth) = synth::gen_attack_pair(&video_spec, &csi_spec, 90 + i as u64).unwrap();
        assert!(matches!(truth.label, synth::PairLabel::Attack { degenerate: false, .. }));
        let a = pipeline.analyze(&video, &csi).unwrap();
        assert!(!a.events.is_empty());
        for ev in &a.events {
            assert_eq!(ev.verdict.per_attribute[2], 0, "pair {fv}/{fc}: {:?}", ev.attributes);
        }
    }
}

#[test]
fn detector_finds_the_documented_example_window() {
    let pipeline = Pipeline::default();
    for seed in 0..5 {
        let csi = synth::gen_csi(&EventSpec::new(0.6, 5.0, 25.0), &SynthSettings::default(), seed).unwrap();
        let events = pipeline.csi_features(&csi).unwrap().events;
        assert_eq!(events.len(), 1, "seed {seed}: {events:?}");
        assert!((events[0].start_s - 5.0).abs() <= 0.3, "seed {seed}: {:?}", events[0]);
        assert!((events[0].end_s - 25.0).abs() <= 0.3, "seed {seed}: {:?}", events[0]);
    }
}

#[test]
fn one_window_per_trial_on_a_hundred_trial_corpus() {
    let pipeline = Pipeline::default();
    let protocol = CorpusProtocol { trials_per_type: 34, ..Default::default() };
    let plans = synth::plan_trials(&protocol, 11);
    let mut off = Vec::new();
    for plan in plans.iter().take(100) {
        let (_, csi, _) = synth::gen_trial(plan, &protocol).unwrap();
        let n = pipeline.csi_features(&csi).unwrap().events.len();
        if n != 1 {
            off.push((plan.index, n));
        }
    }
    assert!(off.is_empty(), "trials with other than one window: {off:?}");
}

#[test]
fn small_clock_offsets_keep_matched_pairs_legitimate() {
    let pipeline = Pipeline::default();
    for (i, offset) in [-0.5, -0.25, 0.25, 0.5].into_iter().enumerate() {
        let mut spec = EventSpec::new(1.0, 8.0, 28.0);
        spec.clock_offset_s = offset;
        let (video, csi, _) = synth::gen_matched_pair(&spec, 7 + i as u64).unwrap();
        let a = pipeline.analyze(&video, &csi).unwrap();
        assert_eq!(longest(&a).verdict.score, 3, "offset {offset}");
    }
}

#[test]
fn single_precision_pipeline_agrees_with_double() {
    let pipeline = Pipeline::default();
    for seed in 0..3 {
        let spec = EventSpec::new([0.6, 1.0, 1.6][seed as usize], 7.0, 29.0);
        let (video, csi, _) = synth::gen_matched_pair(&spec, 500 + seed).unwrap();
        let a64 = pipeline.analyze(&video, &csi).unwrap();
        let a32 = pipeline.analyze(&video.cast::<f32>(), &csi.cast::<f32>()).unwrap();
        let (e64, e32) = (longest(&a64), longest(&a32));
        assert_eq!(e64.verdict.score, e32.verdict.score);
        assert!((e64.window.start_s - e32.window.start_s).abs() <= 0.2);
        assert!((e64.window.end_s - e32.window.end_s).abs() <= 0.2);
        let f = |e: &surfi_core::pipeline::EventReport| (e.attributes.video.f.unwrap(), e.attributes.csi.f.unwrap());
        let ((v64, c64), (v32, c32)) = (f(e64), f(e32));
        assert!((v64 - v32).abs() <= 0.05 && (c64 - c32).abs() <= 0.05, "{v64} {v32} {c64} {c32}");
    }
}

#[test]
fn motionless_video_gives_no_video_bounds() {
    let pipeline = Pipeline::default();
    let mut still = EventSpec::new(1.0, 10.0, 30.0);
    still.amplitude_px = 0.0;
    let live = EventSpec::new(1.0, 10.0, 30.0);
    let (video, csi, _) = synth::gen_attack_pair(&still, &live, 3).unwrap();
    let a = pipeline.analyze(&video, &csi).unwrap();
    let ev = longest(&a);
    assert!(ev.attributes.video.bounds.is_none());
    assert_eq!(&ev.verdict.per_attribute[..2], &[0, 0]);
}
