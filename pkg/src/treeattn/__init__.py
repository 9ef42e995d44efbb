"""Attentive Child-Sum Tree-LSTM / Tree-GRU encoders for sentence pairs."""
from . import kernels
from .autodiff import Node, Parameter, backward, finite_difference_check
from .data import DatasetExample, EmbeddingTable, Vocabulary, load_dataset, load_embeddings
from .model import SentencePairModel, decode_similarity, target_distribution
from .train import TrainConfig, fit, train_epoch
from .trees import DependencyTree, parse_conll_tree

__version__ = "0.1.0"
