from .buffer import ReplayBuffer, Transition, n_step_returns
from .common import Trainer, Validation, derived_seed, evaluate_greedy, evaluate_random, select_best, validation_specs
from .decode import DecodeResult, beam_decode, greedy_decode, greedy_decode_batch, network_scores
from .dqn import DqnConfig, DqnTrainer, boltzmann, q_loss, train_dqn
from .ppo import PpoConfig, PpoTrainer, clip_factor, ppo_loss, train_ppo
