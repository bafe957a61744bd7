"""Persuasion-technique detection toolkit: span algebra, weighted multi-label
training of a small classifier head on frozen features, and evaluation."""

from .corpus import (CorpusError, Dataset, LabeledSpan, LabelVocabulary, MemeRecord, Split, Task,
                     TechniqueLabel, class_frequencies, label_distribution_report, load_dataset)
from .eval import (LabelPrediction, RunSummary, SpanPrediction, classwise_report, macro_f1, micro_f1,
                   modality_split_f1, multi_seed_summary, span_partial_f1)
from .features import (EnsembleSpec, TextFeaturizer, TokenFeaturizer, VisualFeatureStore, ensemble_featurize,
                       featurize_text, fit_text_featurizer, pool_visual_features, synth_visual_features)
from .model import (ClassWeights, MlpHead, TrainConfig, TrainedModel, compute_class_weights, forward,
                    load_checkpoint, loss_gradient, predict_labels, predict_spans, train, weighted_bce_loss)
from .spans import (ChunkTokenizer, Token, TokenizedText, merge_tokens_to_words, project_spans_to_tokens,
                    tokenize_with_offsets, words_to_char_spans)

__version__ = "0.1.0"
