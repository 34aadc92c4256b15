# MOVE NAME
MOVE_AIES = "aies"
MOVE_PCN_INLET = "pcn_inlet"
MOVE_PCN_OUTLET = "pcn_outlet"
MOVE_SWAP = "swap"
MOVES = (MOVE_AIES, MOVE_PCN_INLET, MOVE_PCN_OUTLET, MOVE_SWAP)

# BLOCK NAME
BLOCK_FD = "fd"
BLOCK_INLET = "inlet"
BLOCK_OUTLET = "outlet"

# FD PARAMETER NAME
FD_PARAM_NAMES = ("z", "rho_j", "u", "omega")

# OUTPUT FILE NAME
FIELD_CSV = "density_field.csv"
FIELD_JSON = "density_field.json"
MANIFEST_JSON = "manifest.json"
CHECKPOINT_NPZ = "checkpoint.npz"
CHECKPOINT_JSON = "checkpoint.json"
GROUND_TRUTH_JSON = "ground_truth.json"
DETECTOR_CSV = "detectors.csv"
OBSERVATION_CSV = "observations.csv"
PRIOR_JSON = "prior.json"
RECORD_NPZ = "chains.npz"
RESOLVED_CONFIG_YAML = "config.yaml"
