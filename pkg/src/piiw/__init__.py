"""Policy-guided Rollout IW(1) with learned or tile features, plus search baselines."""

__version__ = "0.1.0"
