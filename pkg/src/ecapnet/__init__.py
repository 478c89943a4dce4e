"""Geometric deep learning toolkit for predicting ECAP fields on meshes."""

from .graph import FeatureGraph, GraphBatch, batch_graphs, build_graph
from .hemodynamics import (EcapField, WssSeries, compute_indices,
                           threshold_map)
from .mesh import TriMesh, VertexAttributes, compute_attributes, load_mesh
from .model import (EcapNet, FcnBaseline, ModelConfig, count_parameters,
                    load_checkpoint, save_checkpoint)
from .synth import ShapeParams, SynthSample, generate_mesh, generate_wss, \
    icosphere, make_sample
from .train import (EvalReport, TrainConfig, cross_validate, evaluate,
                    prepare, train)

__all__ = [
    "FeatureGraph", "GraphBatch", "batch_graphs", "build_graph",
    "EcapField", "WssSeries", "compute_indices", "threshold_map",
    "TriMesh", "VertexAttributes", "compute_attributes", "load_mesh",
    "EcapNet", "FcnBaseline", "ModelConfig", "count_parameters",
    "load_checkpoint", "save_checkpoint",
    "ShapeParams", "SynthSample", "generate_mesh", "generate_wss",
    "icosphere", "make_sample",
    "EvalReport", "TrainConfig", "cross_validate", "evaluate", "prepare",
    "train",
]
__version__ = "0.1.0"
