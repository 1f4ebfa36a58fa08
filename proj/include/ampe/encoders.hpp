#pragma once

#include <string>

#include "ampe/datagen.hpp"
#include "ampe/model.hpp"
#include "ampe/params.hpp"

namespace ampe {

enum class EncoderKind { Transformer, DeepSets, Gru };

std::string encoder_name(EncoderKind k);
EncoderKind encoder_from_name(const std::string& s);

struct TransformerConfig {
  int layers = 4;
  int model_dim = 256;
  int ff_dim = 1024;
  int heads = 4;
};

struct DeepSetsConfig {
  int embed_layers = 4;
  int regress_layers = 4;
  int hidden = 627;
};

struct GruConfig {
  int layers = 4;
  int hidden = 256;
};

// Summary network configuration. The transformer reads the summary off the
// CLS token and the GRU off its final hidden state, so for those two kinds
// summary_dim must equal model_dim / hidden.
struct EncoderConfig {
  EncoderKind kind = EncoderKind::Transformer;
  int summary_dim = 256;
  TransformerConfig transformer;
  DeepSetsConfig deepsets;
  GruConfig gru;

  void validate() const;
};

// One token per active observation: concat(masked x row, y encoding,
// feature mask). The y encoding is the scalar target for regression, a
// one-hot class for classification, and empty for the unsupervised families.
int token_dim(const ModelSpec& spec);
Mat tokenize(const Dataset& data, const ModelSpec& spec);

void init_encoder_params(ParamStore& ps, const EncoderConfig& cfg, int token_dim,
                         Rng& rng);

// Summary of one dataset as a 1 x summary_dim tape variable. Requires at
// least one active observation.
Var encode(Tape& tape, const BoundParams& bp, const EncoderConfig& cfg,
           const ModelSpec& spec, const Dataset& data);

long encoder_param_count(const EncoderConfig& cfg, int token_dim);

}  // namespace ampe
