"""qsift: desk-scale insincere-question classification pipeline.

From-scratch WordPiece tokenization, autodiff transformer encoders with
BERT/RoBERTa/DistilBERT/ALBERT-style variant mechanisms, recurrent
baselines, pretraining objectives, and imbalance-aware evaluation.
"""

__version__ = "0.1.0"

from .tensor import Tensor, backward
from .tokenizer import TokenizedSequence, Vocab

__all__ = ["Tensor", "TokenizedSequence", "Vocab", "backward", "__version__"]
