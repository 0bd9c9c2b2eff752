"""Evolutionary synthesis of 3D human pose training data, a cascaded
2D-to-3D lifting regressor, and the interactive annotation service."""

__version__ = "0.1.0"

from .skeleton import (KinematicTree, SphericalBone, default_tree, neutral_pose,
                       bones_of, forward_kinematics, local_frame, pose_frames,
                       to_local, to_spherical, from_spherical,
                       set_bone_orientation)
from .validity import ValidityModel, fit_from_population, is_valid
from .evolve import (EvolutionConfig, Population, Origin, crossover,
                     mutate_orientation, mutate_global, mutate_length,
                     natural_selection)
from .camera import Intrinsics, Pair2D3D, project, generate_pairs
from .regressor import (LearnerConfig, TrainConfig, DeepLearner, Cascade,
                        adam_step, train_cascade)
from .metrics import mpjpe, procrustes_mpjpe, pck, auc, evaluate, EvalReport
