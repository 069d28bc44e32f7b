# -*- coding: utf-8 -*-
from .config import ModelConfig
from .params import ModelParams, init_params, parameter_count, teacher_head_count
from .forward import backbone_forward, logits, student_embed, teacher_embed
from .checkpoints import load_checkpoint, save_checkpoint

__all__ = (
    'ModelConfig', 'ModelParams', 'init_params', 'parameter_count', 'teacher_head_count',
    'backbone_forward', 'logits', 'student_embed', 'teacher_embed',
    'load_checkpoint', 'save_checkpoint',
)
