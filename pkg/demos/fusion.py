"""Train a questionnaire screener and a video screener, fuse them, screen one child."""

from asdscreen import (CVConfig, ForestParams, PipelineConfig, SelectionConfig, SyntheticSpec,
                       generate_synthetic, screen, train_combined)

q = generate_synthetic(SyntheticSpec(n_questions=40, n_informative=8, n_samples=800, noise_rate=0.6,
                                     age_signal_shift=0.5, seed=5))
# the video set reuses the questionnaire's subjects, so scores can be paired by id
v = generate_synthetic(SyntheticSpec(n_questions=30, n_informative=8, n_samples=800, noise_rate=0.6, seed=6,
                                     instrument="ados_module1_like"), subjects=q)
cfg = PipelineConfig(forest=ForestParams(n_trees=100), selection=SelectionConfig(n_bootstrap=10),
                     cv=CVConfig(n_folds=5, n_bootstrap_rounds=2))
combined = train_combined(q, [v], cfg, q_variant="severity")

for silo_id, silo in combined.silos.items():
    auc = silo.metrics["auc"]
    print(f"{silo_id:>5s}  questionnaire {auc['questionnaire']:.3f}  video {auc['video']:.3f}  "
          f"fused {auc['fused']:.3f}")

i = 0
answers = dict(zip(q.question_ids, map(int, q.answers[i])))
video = dict(zip(v.question_ids, map(int, v.answers[i])))
print(screen(answers, combined, int(q.age_months[i]), q.gender[i], video_responses=video))
