"""
Services
========

Independent services built on the core model:

1. Data Pipeline (services/data_pipeline/)
   - Identity-foldered dataset scanning and CSV manifests
   - Train/eval transforms, torch dataset and loaders
   - Synthetic cartoon-face generator

2. Training (services/training/)
   - YAML run configuration with dotted overrides
   - Stage schedule and total loss
   - Checkpoints, resume and the training loop

3. Identification (services/identification/)
   - Gallery-with-distractors protocol
   - Rank@K, CMC curves and top-K retrieval
   - Embedding dumps and result writers

Usage:
    from services.training import load_config, build_datasets, train
    config = load_config("configs/synthetic.yaml", {"train.seed": 7})
    train_ds, val_ds, _ = build_datasets(config)
    result = train(train_ds, config, "runs/demo", val_dataset=val_ds)
"""

__all__ = ["data_pipeline", "training", "identification"]
