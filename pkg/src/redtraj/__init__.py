"""Road-aware masked autoencoding for path trajectories on road networks."""

from .config import RedConfig
from .errors import ContractViolation, IntegrityError, ParseError, TrainingError, UnsupportedOperation, ValidationError
from .roadnet import RoadNetwork, load_network, save_network
from .trajdata import PathTrajectory, generate_synthetic, load_trajectories, save_trajectories

__version__ = "0.1.0"
