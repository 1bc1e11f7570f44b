"""3D RSRP radio map recovery from sparse measurements.

Gaussian process regression on measured-minus-simulated residuals over 4-D
features (position plus simulated RSRP), point selection by online maximum
posterior variance or offline clustering, interpolation baselines, a
synthetic urban scenario generator, and a benchmark harness.
"""

from .dataset import (CsvParseError, Dataset, FeatureMode, FeatureScaler,
                      Sample, compute_residuals, dataset_to_csv, fit_scaler,
                      load_dataset)
from .kernels import (ConstantKernel, HyperParam, Kernel, MaternKernel,
                      ProductKernel, RBFKernel, RationalQuadraticKernel,
                      SumKernel, WhiteNoiseKernel, composite_kernel,
                      format_kernel, gram_diag, gram_matrix, kernel_eval,
                      parse_kernel, table2_kernels)
from .gpr import (FitError, GprModel, PosteriorPrediction, load_model,
                  optimize_hyperparameters, predict_rsrp_map, save_model)
from .selection import (KMeansState, SelectionMethod, SelectionPlan,
                        kmeans_cluster, plan_from_csv, plan_to_csv,
                        select_offline_kmeans, select_online_map, select_random)
from .baselines import (IdwConfig, KnnConfig, KnnWeighting, VariogramKind,
                        VariogramModel, empirical_variogram, fit_variogram,
                        idw_predict, knn_predict, kriging_predict, semivariance)
from .scenario import (Building, Scenario, ScenarioConfig, Transmitter,
                       buildings_to_csv, generate_dataset, generate_scenario,
                       measured_rsrp, path_loss_db, ray_blockage, simulated_rsrp)
from .evaluation import (EvalReport, GprSettings, Scheme, SweepConfig,
                         TrialSpec, emit_report, rmse, run_sweep, run_trial)

__version__ = "0.1.0"
