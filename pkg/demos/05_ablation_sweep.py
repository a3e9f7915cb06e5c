"""Sweep the task scheduler and print the resulting mAP@10 table.

A heavy task-1 schedule favors global retrieval; task-2-heavy schedules
favor fine-grained retrieval. The sweep shares one split and one model
init so rows differ only in the swept value.
"""

from stylealign import (
    SchedulerCfg,
    StageCfg,
    SweepSpec,
    SyntheticConfig,
    generate_synthetic,
    run_sweep,
)


def main():
    dataset = generate_synthetic(
        SyntheticConfig(n_clusters=16, clips_per_cluster=6), seed=0
    )
    spec = SweepSpec(
        axis="scheduler",
        values=(
            SchedulerCfg("static", 0.0),
            SchedulerCfg("static", 1.0),
            SchedulerCfg("dynamic", 0.95, 0.5, 150),
        ),
        stage1=StageCfg(steps=600, batch_size=32, learning_rate=1e-3, seed=0),
        stage2=StageCfg(steps=300, batch_size=32, learning_rate=1e-4, seed=0, lam=0.5),
        model_d=16,
    )
    report = run_sweep(spec, dataset)
    print(report.render_table())


if __name__ == "__main__":
    main()
