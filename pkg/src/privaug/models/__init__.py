"""Built-in privacy models."""

from .regression import (
    TRUE_BETA,
    RegressionModelSpec,
    clamp,
    l1_sensitivity_regression,
    laplace_regression_loglik,
    naive_regression_posterior,
    naive_regression_posterior_data_scale,
    nearest_spd,
    regression_conjugate_posterior,
    regression_latent,
    regression_model,
    regression_posterior_step,
    regression_record_stat,
    regression_record_stats,
    simulate_regression_release,
    unpack_gram,
)
from .tables import (
    CELLS,
    CONFIDENTIAL_TABLE,
    PUBLISHED_DGAUSS_SIGMA,
    PUBLISHED_DGAUSS_TABLE,
    PUBLISHED_RR_TABLE,
    TABLE_VARNAMES,
    TableModelSpec,
    cell_counts,
    cell_indicator_stat,
    dgauss_count_loglik,
    dgauss_table_model,
    dirichlet_posterior_step,
    multinomial_latent,
    naive_table_posterior,
    odds_ratio,
    rr_match_loglik,
    rr_match_stat,
    rr_record_stat,
    rr_table_model,
    simulate_dgauss_release,
    simulate_rr_release,
    table_model,
    table_to_records,
)
