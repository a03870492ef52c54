"""mapvec: composable representation learning for map entities.

Subpackages:
    data        atomic files, synthetic city, preprocessing, networks
    encoders    feature codec and the token / graph / sequence encoder stages
    pretrain    self-supervised task losses and the two training paradigms
    downstream  task heads, label builders, and fine-tuning strategies
    metrics     regression / classification / retrieval metrics
    pipeline    config-driven orchestration and the CLI
    bench       combination grid, rankings, efficiency profiling
"""

__version__ = "0.1.0"
