class Constants:
    # numeric tolerances
    injectivity_tol: float = 1e-12
    lstsq_cond: float = 1e-10
    ridge_damping: float = 1e-12
    fd_agreement: float = 1e-3
    fd_min_derivative: float = 1e-6
    prune_tol: float = 1e-12
    lipschitz_scan_step: float = 1e-4
    polynomial_grid_size: int = 64

    # escalation schedules
    default_knots: int = 9
    knot_cap: int = 257
    terms_schedule: tuple[int, ...] = (2, 4, 8, 16, 32, 64, 128)
    direction_nodes_schedule: tuple[int, ...] = (4, 8, 16, 32, 64)
    fit_grid: int = 257
    identity_h: float = 1e-3
    identity_h_floor: float = 1e-8

    # inner functions
    sprecher_gamma: int = 10
    sprecher_depth: int = 4
    monotone_pl_segments: int = 8
    monotone_pl_roughness: float = 0.05
    max_redraws: int = 8

    # functional builder
    moment_count: int = 3

    csv_columns: tuple[str, ...] = (
        "experiment", "n", "m", "M", "width", "depth", "term_count",
        "sup_error", "eps", "budget_flag", "runtime_ms", "seed",
    )
    csv_float_format: str = "%.17g"

    out_dir_env: str = "TFNN_OUT_DIR"


class Activations:
    """Identifiers accepted by ``parse_activation``."""
    names: tuple[str, ...] = (
        "relu", "leaky_relu", "tanh", "sigmoid", "softplus", "sin", "identity", "poly",
    )
    relu_family: frozenset[str] = frozenset({"relu", "leaky_relu", "identity"})
