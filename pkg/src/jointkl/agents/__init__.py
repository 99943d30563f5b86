from jointkl.agents.analytic import (
    CoinsBetaPosteriorAgent,
    LogisticMarginalAgent,
    LogisticPriorAgent,
    PerfectAgent,
    SharedPAgent,
    UniformAgent,
    make_analytic,
)
from jointkl.agents.neural import (
    Ensemble,
    EnsembleAgent,
    EnsemblePlus,
    Mlp,
    train_ensemble,
    train_mlp,
    trained_factory,
)
