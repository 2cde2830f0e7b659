"""
DeskAIA Benchmark Module
Synthetic world, model, training loop, evaluation and resource accounting
"""
from .world import (
    CLASS_NAMES, OPEN, SPEAKER, ClipSample, Dataset, clip_labels, decode_states, generate_dataset,
    load_dataset, make_prototypes, regenerate_labels, save_dataset,
)
from .model import AIAModel, Encoder, load_checkpoint, save_checkpoint
from .trainer import StepResult, Trainer, TrainingMode, check_resource_guard, train_amu, train_joint
from .evaluation import EvalReport, average_precision, evaluate_map
from .resources import ResourceReport, analytic_multiply_adds, count_resources, run_bench
from .attention import attention_tables, dump_attention, parse_clip_selector
