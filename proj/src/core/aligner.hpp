#pragma once

#include "config.hpp"
#include "nn.hpp"

namespace xmbt {

enum class WindowLabel : uint8_t { Current, Adjacent, Other };

// Partition of source positions relative to each output position: the
// current window, its immediate neighbours, and everything else.
struct WindowAssignment {
    int64_t n_in = 0, n_out = 0;
    int64_t window_size = 1;  // ceil(longer / shorter)
    std::vector<WindowLabel> labels;  // n_out x n_in, row-major

    WindowLabel label(int64_t i, int64_t j) const { return labels[static_cast<size_t>(i * n_in + j)]; }
    std::vector<int64_t> positions(int64_t i, WindowLabel l) const {
        std::vector<int64_t> out;
        for (int64_t j = 0; j < n_in; ++j)
            if (label(i, j) == l) out.push_back(j);
        return out;
    }
};

WindowAssignment partition_windows(int64_t n_in, int64_t n_out);

double gaussian_density(double x, double mu, double sigma);

// Score matrix: density at mu / mu+sigma / mu+2*sigma for current / adjacent
// / other positions, so rows always order current > adjacent > other.
Tensor beta_scores(const WindowAssignment& wa, double mu, double sigma);

struct AlignmentMatrix {
    WindowAssignment assignment;
    Tensor beta;     // n_out x n_in pre-softmax scores (empty in hard mode)
    Tensor weights;  // n_out x n_in, rows sum to 1
};

AlignmentMatrix soft_alignment(int64_t n_in, int64_t n_out, double mu, double sigma);
AlignmentMatrix hard_alignment(int64_t n_in, int64_t n_out);

std::string alignment_to_csv(const AlignmentMatrix& am);

// Length mapper + the two dimension mappers. Soft and hard connections have
// no parameters of their own; pooling owns one learned length transform per
// direction over zero-padded fixed-length inputs.
class SlidingWindowAligner {
public:
    SlidingWindowAligner(const ModelConfig& cfg, ParamGroup& mapper, Rng& rng);

    // generic length mapper; `to_video` selects the pooling transform
    Var length_map(const Var& src, int64_t n_out, AlignerMode mode, bool to_video) const;

    Var map_text_to_video(const Var& text_enc, int64_t n_out) const;   // n x d_text -> n_out x d_video
    Var map_text_to_video(const Var& text_enc, int64_t n_out, AlignerMode mode) const;
    Var map_video_to_text(const Var& video_emb, int64_t n_out) const;  // L x d_code -> n_out x d_text
    Var map_video_to_text(const Var& video_emb, int64_t n_out, AlignerMode mode) const;

    AlignmentMatrix alignment_for(int64_t n_in, int64_t n_out, AlignerMode mode) const;

    const LinearLayer& dim_text_to_video() const { return dim_t2v_; }
    const LinearLayer& dim_video_to_text() const { return dim_v2t_; }

private:
    const ModelConfig* cfg_;
    LinearLayer dim_t2v_, dim_v2t_;
    Var pool_t2v_, pool_v2t_;
};

}  // namespace xmbt
