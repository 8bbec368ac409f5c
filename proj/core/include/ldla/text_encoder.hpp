// Copyright (C) 2026 The ldla Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ldla/tensor.hpp"

#include <string>
#include <string_view>

namespace ldla {

/// Encoded prompt: one fixed-dimension vector per token slot, shape (max_tokens, dim).
struct ConditionEmbedding {
    Tensor tokens;
    std::string source_prompt;

    int token_count() const { return tokens.dim(0); }
    int dim() const { return tokens.dim(1); }
    // Sum over token slots, shape (dim). Padding slots are zero.
    Tensor pooled() const;

    friend bool operator==(const ConditionEmbedding&, const ConditionEmbedding&) = default;
};

/// Frozen prompt encoder. Implementations must be deterministic and have no trainable state.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;
    virtual ConditionEmbedding embed(std::string_view prompt) const = 0;
    virtual int dim() const = 0;
    virtual int max_tokens() const = 0;
};

/// Desk-scale stand-in for a pretrained text encoder.
///
/// Each whitespace token maps to a pseudo-random vector seeded by a hash of
/// the token text and its slot. Percentage tokens such as "70%" additionally
/// carry their value in the last two dimensions (value/100 and a flag), which
/// gives the numeric ordering a pretrained encoder would know about. Tokens
/// past the last slot are folded into it by chaining their hashes, so any
/// token difference changes at least one vector.
class HashingTextEncoder final : public TextEncoder {
public:
    explicit HashingTextEncoder(int dim = 16, int max_tokens = 24);

    ConditionEmbedding embed(std::string_view prompt) const override;
    int dim() const override { return dim_; }
    int max_tokens() const override { return max_tokens_; }

private:
    int dim_;
    int max_tokens_;
};

}  // namespace ldla
