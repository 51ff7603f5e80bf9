#include "ledits/tiny_denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ledits/error.hpp"
#include "ledits/random.hpp"

namespace ledits {

namespace {

// Parameter order inside Weights; init_tiny_weights emits tensors in this order.
enum Param : int {
  kEnc1W, kEnc1B, kEnc2W, kEnc2B, kEnc3W, kEnc3B,
  kTokEmb, kAttnQ, kAttnK, kAttnV, kAttnO, kAttnHeads,
  kDec2W, kDec2B, kDec1W, kDec1B, kOutW, kOutB,
  kParamCount
};

constexpr const char* kParamNames[kParamCount] = {
    "enc1.w", "enc1.b", "enc2.w", "enc2.b", "enc3.w", "enc3.b",
    "tok.emb", "attn.q", "attn.k", "attn.v", "attn.o", "attn.heads",
    "dec2.w", "dec2.b", "dec1.w", "dec1.b", "out.w", "out.b"};

float silu(float v) { return v / (1.0f + std::exp(-v)); }

float silu_grad(float v) {
  const float s = 1.0f / (1.0f + std::exp(-v));
  return s * (1.0f + v * (1.0f - s));
}

void conv3x3_forward(const float* in, int cin, int h, int w, const float* weight,
                     const float* bias, int cout, float* out) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < cout; ++o) std::fill(out + o * plane, out + (o + 1) * plane, bias[o]);
  for (int o = 0; o < cout; ++o) {
    float* out_plane = out + o * plane;
    for (int i = 0; i < cin; ++i) {
      const float* in_plane = in + i * plane;
      const float* k = weight + (static_cast<std::size_t>(o) * cin + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          const float wv = k[ky * 3 + kx];
          for (int y = y0; y < y1; ++y) {
            float* orow = out_plane + y * w;
            const float* irow = in_plane + (y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients and (optionally) the input gradient.
void conv3x3_backward(const float* in, int cin, int h, int w, const float* weight, int cout,
                      const float* dout, float* dweight, float* dbias, float* din) {
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int o = 0; o < cout; ++o) {
    const float* g = dout + o * plane;
    double acc = 0.0;
    for (std::size_t p = 0; p < plane; ++p) acc += g[p];
    dbias[o] += static_cast<float>(acc);
  }
  for (int o = 0; o < cout; ++o) {
    const float* g_plane = dout + o * plane;
    for (int i = 0; i < cin; ++i) {
      const float* in_plane = in + i * plane;
      float* din_plane = din != nullptr ? din + i * plane : nullptr;
      const std::size_t kbase = (static_cast<std::size_t>(o) * cin + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const int dy = ky - 1;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        for (int kx = 0; kx < 3; ++kx) {
          const int dx = kx - 1;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          const float wv = weight[kbase + ky * 3 + kx];
          float acc = 0.0f;
          for (int y = y0; y < y1; ++y) {
            const float* grow = g_plane + y * w;
            const float* irow = in_plane + (y + dy) * w + dx;
            for (int x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (din_plane != nullptr) {
              float* drow = din_plane + (y + dy) * w + dx;
              for (int x = x0; x < x1; ++x) drow[x] += wv * grow[x];
            }
          }
          dweight[kbase + ky * 3 + kx] += acc;
        }
      }
    }
  }
}

void avg_pool2(const float* in, int c, int h, int w, float* out) {
  const int oh = h / 2;
  const int ow = w / 2;
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const float* p = in + (static_cast<std::size_t>(k) * h + 2 * y) * w + 2 * x;
        out[(static_cast<std::size_t>(k) * oh + y) * ow + x] = 0.25f * (p[0] + p[1] + p[w] + p[w + 1]);
      }
    }
  }
}

void avg_pool2_backward(const float* dout, int c, int h, int w, float* din) {
  const int oh = h / 2;
  const int ow = w / 2;
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const float g = 0.25f * dout[(static_cast<std::size_t>(k) * oh + y) * ow + x];
        float* p = din + (static_cast<std::size_t>(k) * h + 2 * y) * w + 2 * x;
        p[0] += g;
        p[1] += g;
        p[w] += g;
        p[w + 1] += g;
      }
    }
  }
}

// in: (c, h, w) -> out: (c, 2h, 2w)
void upsample2(const float* in, int c, int h, int w, float* out) {
  const int oh = 2 * h;
  const int ow = 2 * w;
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        out[(static_cast<std::size_t>(k) * oh + y) * ow + x] =
            in[(static_cast<std::size_t>(k) * h + y / 2) * w + x / 2];
      }
    }
  }
}

void upsample2_backward(const float* dout, int c, int h, int w, float* din) {
  const int oh = 2 * h;
  const int ow = 2 * w;
  for (int k = 0; k < c; ++k) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        din[(static_cast<std::size_t>(k) * h + y / 2) * w + x / 2] +=
            dout[(static_cast<std::size_t>(k) * oh + y) * ow + x];
      }
    }
  }
}

std::vector<float> normal_tensor(CounterRng& rng, std::size_t n, double std) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.normal() * std);
  return v;
}

// Typed view over a Weights object in canonical order.
struct Params {
  std::array<const float*, kParamCount> p{};
  TinyArchitecture arch;

  explicit Params(const Weights& weights) : arch(infer_architecture(weights)) {
    for (int k = 0; k < kParamCount; ++k) p[k] = weights.get(kParamNames[k]).data.data();
  }
};

// Everything the backward pass needs from one forward pass.
struct Activations {
  int h = 0, w = 0;
  std::vector<int> tokens;
  std::vector<float> inp, z1, e1, p1, z2, e2, p2, z3, e3;
  std::vector<float> emb, q, k, v, probs, att, h3;
  std::vector<float> c2, z4, d2, c1, z5, d1, eps;
};

void forward(const Params& P, const float* x, int h, int w, double signal, double noise,
             const std::vector<int>& tokens, Activations& A) {
  const TinyArchitecture& a = P.arch;
  const int cin = a.in_channels + 2;
  const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  const std::size_t n1 = static_cast<std::size_t>(h) * w;
  const std::size_t n2 = static_cast<std::size_t>(h2) * w2;
  const std::size_t n4 = static_cast<std::size_t>(h4) * w4;
  A.h = h;
  A.w = w;
  A.tokens = tokens;

  A.inp.assign(cin * n1, 0.0f);
  std::copy(x, x + a.in_channels * n1, A.inp.begin());
  std::fill(A.inp.begin() + a.in_channels * n1, A.inp.begin() + (a.in_channels + 1) * n1,
            static_cast<float>(signal));
  std::fill(A.inp.begin() + (a.in_channels + 1) * n1, A.inp.end(), static_cast<float>(noise));

  A.z1.resize(a.enc1 * n1);
  conv3x3_forward(A.inp.data(), cin, h, w, P.p[kEnc1W], P.p[kEnc1B], a.enc1, A.z1.data());
  A.e1.resize(A.z1.size());
  std::transform(A.z1.begin(), A.z1.end(), A.e1.begin(), silu);
  A.p1.resize(a.enc1 * n2);
  avg_pool2(A.e1.data(), a.enc1, h, w, A.p1.data());

  A.z2.resize(a.enc2 * n2);
  conv3x3_forward(A.p1.data(), a.enc1, h2, w2, P.p[kEnc2W], P.p[kEnc2B], a.enc2, A.z2.data());
  A.e2.resize(A.z2.size());
  std::transform(A.z2.begin(), A.z2.end(), A.e2.begin(), silu);
  A.p2.resize(a.enc2 * n4);
  avg_pool2(A.e2.data(), a.enc2, h2, w2, A.p2.data());

  A.z3.resize(a.enc3 * n4);
  conv3x3_forward(A.p2.data(), a.enc2, h4, w4, P.p[kEnc3W], P.p[kEnc3B], a.enc3, A.z3.data());
  A.e3.resize(A.z3.size());
  std::transform(A.z3.begin(), A.z3.end(), A.e3.begin(), silu);

  // Cross-attention: queries from e3 positions, keys/values from token embeddings.
  const int L = static_cast<int>(tokens.size());
  const int D = a.attn_dim;
  const int H = a.heads;
  const int dh = D / H;
  const int E = a.embed_dim;
  A.emb.resize(static_cast<std::size_t>(L) * E);
  for (int l = 0; l < L; ++l) {
    const float* row = P.p[kTokEmb] + static_cast<std::size_t>(tokens[l]) * E;
    std::copy(row, row + E, A.emb.begin() + static_cast<std::size_t>(l) * E);
  }
  A.q.assign(static_cast<std::size_t>(D) * n4, 0.0f);
  for (int d = 0; d < D; ++d) {
    for (int f = 0; f < a.enc3; ++f) {
      const float wv = P.p[kAttnQ][d * a.enc3 + f];
      for (std::size_t p = 0; p < n4; ++p) A.q[d * n4 + p] += wv * A.e3[f * n4 + p];
    }
  }
  A.k.assign(static_cast<std::size_t>(D) * L, 0.0f);
  A.v.assign(static_cast<std::size_t>(D) * L, 0.0f);
  for (int d = 0; d < D; ++d) {
    for (int l = 0; l < L; ++l) {
      float kk = 0.0f, vv = 0.0f;
      for (int e = 0; e < E; ++e) {
        kk += P.p[kAttnK][d * E + e] * A.emb[l * E + e];
        vv += P.p[kAttnV][d * E + e] * A.emb[l * E + e];
      }
      A.k[d * L + l] = kk;
      A.v[d * L + l] = vv;
    }
  }
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  // probs layout [head][token][position] matches the stash layout.
  A.probs.assign(static_cast<std::size_t>(H) * L * n4, 0.0f);
  A.att.assign(static_cast<std::size_t>(D) * n4, 0.0f);
  std::vector<float> logits(L);
  for (int hh = 0; hh < H; ++hh) {
    for (std::size_t p = 0; p < n4; ++p) {
      float peak = -std::numeric_limits<float>::infinity();
      for (int l = 0; l < L; ++l) {
        float s = 0.0f;
        for (int d = hh * dh; d < (hh + 1) * dh; ++d) s += A.q[d * n4 + p] * A.k[d * L + l];
        logits[l] = s * inv_sqrt;
        peak = std::max(peak, logits[l]);
      }
      float total = 0.0f;
      for (int l = 0; l < L; ++l) {
        logits[l] = std::exp(logits[l] - peak);
        total += logits[l];
      }
      for (int l = 0; l < L; ++l) {
        const float pr = logits[l] / total;
        A.probs[(static_cast<std::size_t>(hh) * L + l) * n4 + p] = pr;
        for (int d = hh * dh; d < (hh + 1) * dh; ++d) A.att[d * n4 + p] += pr * A.v[d * L + l];
      }
    }
  }
  A.h3 = A.e3;
  for (int f = 0; f < a.enc3; ++f) {
    for (int d = 0; d < D; ++d) {
      const float wv = P.p[kAttnO][f * D + d];
      for (std::size_t p = 0; p < n4; ++p) A.h3[f * n4 + p] += wv * A.att[d * n4 + p];
    }
  }

  // Decoder.
  const int c2ch = a.enc3 + a.enc2;
  A.c2.resize(c2ch * n2);
  upsample2(A.h3.data(), a.enc3, h4, w4, A.c2.data());
  std::copy(A.e2.begin(), A.e2.end(), A.c2.begin() + a.enc3 * n2);
  A.z4.resize(a.enc2 * n2);
  conv3x3_forward(A.c2.data(), c2ch, h2, w2, P.p[kDec2W], P.p[kDec2B], a.enc2, A.z4.data());
  A.d2.resize(A.z4.size());
  std::transform(A.z4.begin(), A.z4.end(), A.d2.begin(), silu);

  const int c1ch = a.enc2 + a.enc1;
  A.c1.resize(c1ch * n1);
  upsample2(A.d2.data(), a.enc2, h2, w2, A.c1.data());
  std::copy(A.e1.begin(), A.e1.end(), A.c1.begin() + a.enc2 * n1);
  A.z5.resize(a.enc1 * n1);
  conv3x3_forward(A.c1.data(), c1ch, h, w, P.p[kDec1W], P.p[kDec1B], a.enc1, A.z5.data());
  A.d1.resize(A.z5.size());
  std::transform(A.z5.begin(), A.z5.end(), A.d1.begin(), silu);

  A.eps.resize(a.in_channels * n1);
  conv3x3_forward(A.d1.data(), a.enc1, h, w, P.p[kOutW], P.p[kOutB], a.in_channels, A.eps.data());
}

void silu_backward(const std::vector<float>& pre, std::vector<float>& grad) {
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= silu_grad(pre[i]);
}

// Accumulates parameter gradients for dL/d(eps) = deps.
void backward(const Params& P, const Activations& A, const std::vector<float>& deps,
              std::vector<std::vector<float>>& G) {
  const TinyArchitecture& a = P.arch;
  const int h = A.h, w = A.w;
  const int h2 = h / 2, w2 = w / 2, h4 = h / 4, w4 = w / 4;
  const std::size_t n1 = static_cast<std::size_t>(h) * w;
  const std::size_t n2 = static_cast<std::size_t>(h2) * w2;
  const std::size_t n4 = static_cast<std::size_t>(h4) * w4;

  std::vector<float> dd1(a.enc1 * n1, 0.0f);
  conv3x3_backward(A.d1.data(), a.enc1, h, w, P.p[kOutW], a.in_channels, deps.data(),
                   G[kOutW].data(), G[kOutB].data(), dd1.data());
  silu_backward(A.z5, dd1);

  const int c1ch = a.enc2 + a.enc1;
  std::vector<float> dc1(c1ch * n1, 0.0f);
  conv3x3_backward(A.c1.data(), c1ch, h, w, P.p[kDec1W], a.enc1, dd1.data(), G[kDec1W].data(),
                   G[kDec1B].data(), dc1.data());
  std::vector<float> dd2(a.enc2 * n2, 0.0f);
  upsample2_backward(dc1.data(), a.enc2, h2, w2, dd2.data());
  std::vector<float> de1(dc1.begin() + a.enc2 * n1, dc1.end());
  silu_backward(A.z4, dd2);

  const int c2ch = a.enc3 + a.enc2;
  std::vector<float> dc2(c2ch * n2, 0.0f);
  conv3x3_backward(A.c2.data(), c2ch, h2, w2, P.p[kDec2W], a.enc2, dd2.data(), G[kDec2W].data(),
                   G[kDec2B].data(), dc2.data());
  std::vector<float> dh3(a.enc3 * n4, 0.0f);
  upsample2_backward(dc2.data(), a.enc3, h4, w4, dh3.data());
  std::vector<float> de2(dc2.begin() + a.enc3 * n2, dc2.end());

  // Attention.
  const int L = static_cast<int>(A.tokens.size());
  const int D = a.attn_dim;
  const int H = a.heads;
  const int dh = D / H;
  const int E = a.embed_dim;
  std::vector<float> de3 = dh3;  // residual path
  std::vector<float> datt(static_cast<std::size_t>(D) * n4, 0.0f);
  for (int f = 0; f < a.enc3; ++f) {
    for (int d = 0; d < D; ++d) {
      const float wv = P.p[kAttnO][f * D + d];
      float acc = 0.0f;
      for (std::size_t p = 0; p < n4; ++p) {
        acc += dh3[f * n4 + p] * A.att[d * n4 + p];
        datt[d * n4 + p] += wv * dh3[f * n4 + p];
      }
      G[kAttnO][f * D + d] += acc;
    }
  }
  const float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dh));
  std::vector<float> dq(static_cast<std::size_t>(D) * n4, 0.0f);
  std::vector<float> dk(static_cast<std::size_t>(D) * L, 0.0f);
  std::vector<float> dv(static_cast<std::size_t>(D) * L, 0.0f);
  std::vector<float> dprob(L);
  for (int hh = 0; hh < H; ++hh) {
    for (std::size_t p = 0; p < n4; ++p) {
      float dot = 0.0f;
      for (int l = 0; l < L; ++l) {
        const float pr = A.probs[(static_cast<std::size_t>(hh) * L + l) * n4 + p];
        float g = 0.0f;
        for (int d = hh * dh; d < (hh + 1) * dh; ++d) {
          g += datt[d * n4 + p] * A.v[d * L + l];
          dv[d * L + l] += pr * datt[d * n4 + p];
        }
        dprob[l] = g;
        dot += pr * g;
      }
      for (int l = 0; l < L; ++l) {
        const float pr = A.probs[(static_cast<std::size_t>(hh) * L + l) * n4 + p];
        const float dlogit = pr * (dprob[l] - dot) * inv_sqrt;
        for (int d = hh * dh; d < (hh + 1) * dh; ++d) {
          dq[d * n4 + p] += dlogit * A.k[d * L + l];
          dk[d * L + l] += dlogit * A.q[d * n4 + p];
        }
      }
    }
  }
  for (int d = 0; d < D; ++d) {
    for (int f = 0; f < a.enc3; ++f) {
      const float wv = P.p[kAttnQ][d * a.enc3 + f];
      float acc = 0.0f;
      for (std::size_t p = 0; p < n4; ++p) {
        acc += dq[d * n4 + p] * A.e3[f * n4 + p];
        de3[f * n4 + p] += wv * dq[d * n4 + p];
      }
      G[kAttnQ][d * a.enc3 + f] += acc;
    }
  }
  for (int l = 0; l < L; ++l) {
    float* demb = G[kTokEmb].data() + static_cast<std::size_t>(A.tokens[l]) * E;
    for (int d = 0; d < D; ++d) {
      const float gk = dk[d * L + l];
      const float gv = dv[d * L + l];
      for (int e = 0; e < E; ++e) {
        G[kAttnK][d * E + e] += gk * A.emb[l * E + e];
        G[kAttnV][d * E + e] += gv * A.emb[l * E + e];
        demb[e] += gk * P.p[kAttnK][d * E + e] + gv * P.p[kAttnV][d * E + e];
      }
    }
  }

  // Encoder.
  silu_backward(A.z3, de3);
  std::vector<float> dp2(a.enc2 * n4, 0.0f);
  conv3x3_backward(A.p2.data(), a.enc2, h4, w4, P.p[kEnc3W], a.enc3, de3.data(), G[kEnc3W].data(),
                   G[kEnc3B].data(), dp2.data());
  avg_pool2_backward(dp2.data(), a.enc2, h2, w2, de2.data());
  silu_backward(A.z2, de2);
  std::vector<float> dp1(a.enc1 * n2, 0.0f);
  conv3x3_backward(A.p1.data(), a.enc1, h2, w2, P.p[kEnc2W], a.enc2, de2.data(), G[kEnc2W].data(),
                   G[kEnc2B].data(), dp1.data());
  avg_pool2_backward(dp1.data(), a.enc1, h, w, de1.data());
  silu_backward(A.z1, de1);
  conv3x3_backward(A.inp.data(), a.in_channels + 2, h, w, P.p[kEnc1W], a.enc1, de1.data(),
                   G[kEnc1W].data(), G[kEnc1B].data(), nullptr);
}

void check_input(const TinyArchitecture& arch, const Shape& s) {
  if (s.channels != arch.in_channels) {
    throw ParameterError("tiny denoiser expects " + std::to_string(arch.in_channels) +
                         " channels, input has " + std::to_string(s.channels));
  }
  if (s.height % 4 != 0 || s.width % 4 != 0 || s.height < 4 || s.width < 4) {
    throw ParameterError("tiny denoiser input " + to_string(s) + " must be a multiple of 4");
  }
}

std::vector<std::vector<float>> zero_gradients(const Weights& weights) {
  std::vector<std::vector<float>> g;
  for (const auto& t : weights.tensors()) g.emplace_back(t.data.size(), 0.0f);
  return g;
}

}  // namespace

Weights init_tiny_weights(const TinyArchitecture& arch, std::uint64_t seed, bool zero_query) {
  if (arch.in_channels <= 0 || arch.enc1 <= 0 || arch.enc2 <= 0 || arch.enc3 <= 0 ||
      arch.attn_dim <= 0 || arch.heads <= 0 || arch.vocab <= 0 || arch.embed_dim <= 0 ||
      arch.attn_dim % arch.heads != 0) {
    throw ParameterError("invalid tiny denoiser architecture");
  }
  CounterRng rng(seed, NoiseDomain::init, 0);
  auto u = [](int v) { return static_cast<std::uint32_t>(v); };
  auto conv = [&](const char* name, int cout, int cin, double gain) {
    const double std = gain / std::sqrt(9.0 * cin);
    return NamedTensor{name, {u(cout), u(cin), 3, 3}, normal_tensor(rng, 9ull * cout * cin, std)};
  };
  auto zeros = [&](const char* name, int n) {
    return NamedTensor{name, {u(n)}, std::vector<float>(n, 0.0f)};
  };
  Weights w;
  w.add(conv("enc1.w", arch.enc1, arch.in_channels + 2, 1.7));
  w.add(zeros("enc1.b", arch.enc1));
  w.add(conv("enc2.w", arch.enc2, arch.enc1, 1.7));
  w.add(zeros("enc2.b", arch.enc2));
  w.add(conv("enc3.w", arch.enc3, arch.enc2, 1.7));
  w.add(zeros("enc3.b", arch.enc3));
  NamedTensor emb{"tok.emb", {u(arch.vocab), u(arch.embed_dim)},
                  normal_tensor(rng, static_cast<std::size_t>(arch.vocab) * arch.embed_dim, 1.0)};
  // The start token is a null token: zero key and value, so it only absorbs attention.
  std::fill(emb.data.begin(), emb.data.begin() + arch.embed_dim, 0.0f);
  w.add(std::move(emb));
  NamedTensor q{"attn.q", {u(arch.attn_dim), u(arch.enc3)},
                normal_tensor(rng, static_cast<std::size_t>(arch.attn_dim) * arch.enc3,
                              1.0 / std::sqrt(arch.enc3))};
  if (zero_query) std::fill(q.data.begin(), q.data.end(), 0.0f);
  w.add(std::move(q));
  const double emb_std = 1.0 / std::sqrt(arch.embed_dim);
  w.add({"attn.k", {u(arch.attn_dim), u(arch.embed_dim)},
         normal_tensor(rng, static_cast<std::size_t>(arch.attn_dim) * arch.embed_dim, emb_std)});
  w.add({"attn.v", {u(arch.attn_dim), u(arch.embed_dim)},
         normal_tensor(rng, static_cast<std::size_t>(arch.attn_dim) * arch.embed_dim, emb_std)});
  w.add({"attn.o", {u(arch.enc3), u(arch.attn_dim)},
         normal_tensor(rng, static_cast<std::size_t>(arch.enc3) * arch.attn_dim,
                       0.5 / std::sqrt(arch.attn_dim))});
  w.add({"attn.heads", {1}, {static_cast<float>(arch.heads)}});
  w.add(conv("dec2.w", arch.enc2, arch.enc3 + arch.enc2, 1.7));
  w.add(zeros("dec2.b", arch.enc2));
  w.add(conv("dec1.w", arch.enc1, arch.enc2 + arch.enc1, 1.7));
  w.add(zeros("dec1.b", arch.enc1));
  w.add(conv("out.w", arch.in_channels, arch.enc1, 0.5));
  w.add(zeros("out.b", arch.in_channels));
  return w;
}

TinyArchitecture infer_architecture(const Weights& weights) {
  if (weights.tensors().size() != kParamCount) {
    throw ParameterError("tiny denoiser needs " + std::to_string(kParamCount) + " tensors, got " +
                         std::to_string(weights.tensors().size()));
  }
  for (int k = 0; k < kParamCount; ++k) {
    if (weights.tensors()[k].name != kParamNames[k]) {
      throw ParameterError("tiny denoiser tensor " + std::to_string(k) + " should be '" +
                           kParamNames[k] + "', found '" + weights.tensors()[k].name + "'");
    }
  }
  auto dims = [&](int k) -> const std::vector<std::uint32_t>& { return weights.tensors()[k].dims; };
  auto expect = [&](int k, std::vector<std::uint32_t> want) {
    if (dims(k) != want) {
      throw ParameterError(std::string("tiny denoiser tensor '") + kParamNames[k] +
                           "' has unexpected dimensions");
    }
  };
  if (dims(kEnc1W).size() != 4 || dims(kTokEmb).size() != 2 || dims(kAttnQ).size() != 2) {
    throw ParameterError("tiny denoiser tensors have unexpected rank");
  }
  TinyArchitecture a;
  a.enc1 = static_cast<int>(dims(kEnc1W)[0]);
  a.in_channels = static_cast<int>(dims(kEnc1W)[1]) - 2;
  a.vocab = static_cast<int>(dims(kTokEmb)[0]);
  a.embed_dim = static_cast<int>(dims(kTokEmb)[1]);
  a.attn_dim = static_cast<int>(dims(kAttnQ)[0]);
  if (dims(kEnc2W).size() != 4 || dims(kEnc3W).size() != 4) {
    throw ParameterError("tiny denoiser tensors have unexpected rank");
  }
  a.enc2 = static_cast<int>(dims(kEnc2W)[0]);
  a.enc3 = static_cast<int>(dims(kEnc3W)[0]);
  const float heads = weights.tensors()[kAttnHeads].data.empty() ? 0.0f
                                                                  : weights.tensors()[kAttnHeads].data[0];
  a.heads = static_cast<int>(heads);
  if (a.in_channels <= 0 || a.heads <= 0 || static_cast<float>(a.heads) != heads ||
      a.attn_dim % a.heads != 0) {
    throw ParameterError("tiny denoiser weights describe an invalid architecture");
  }
  auto u = [](int v) { return static_cast<std::uint32_t>(v); };
  expect(kEnc1B, {u(a.enc1)});
  expect(kEnc2W, {u(a.enc2), u(a.enc1), 3, 3});
  expect(kEnc2B, {u(a.enc2)});
  expect(kEnc3W, {u(a.enc3), u(a.enc2), 3, 3});
  expect(kEnc3B, {u(a.enc3)});
  expect(kAttnQ, {u(a.attn_dim), u(a.enc3)});
  expect(kAttnK, {u(a.attn_dim), u(a.embed_dim)});
  expect(kAttnV, {u(a.attn_dim), u(a.embed_dim)});
  expect(kAttnO, {u(a.enc3), u(a.attn_dim)});
  expect(kAttnHeads, {1});
  expect(kDec2W, {u(a.enc2), u(a.enc3 + a.enc2), 3, 3});
  expect(kDec2B, {u(a.enc2)});
  expect(kDec1W, {u(a.enc1), u(a.enc2 + a.enc1), 3, 3});
  expect(kDec1B, {u(a.enc1)});
  expect(kOutW, {u(a.in_channels), u(a.enc1), 3, 3});
  expect(kOutB, {u(a.in_channels)});
  return a;
}

TinyDenoiser::TinyDenoiser(Weights weights, NoiseSchedule schedule, Shape input)
    : weights_(std::move(weights)),
      schedule_(std::move(schedule)),
      input_(input),
      arch_(infer_architecture(weights_)) {
  check_input(arch_, input_);
  Fingerprinter fp;
  fp.text("ledits.model.tiny.v1");
  fp.bytes(weights_.fingerprint()).bytes(schedule_.fingerprint());
  fp.u32(input_.channels).u32(input_.height).u32(input_.width);
  fingerprint_ = fp.finish();
}

EpsOutput TinyDenoiser::eps(const Field& x, int t, const Conditioning* cond) const {
  require_same_shape(x.shape(), input_, "tiny denoiser input");
  if (t < 1 || t > schedule_.steps()) {
    throw ParameterError("tiny denoiser timestep " + std::to_string(t) + " outside [1, T]");
  }
  std::vector<int> tokens{kStartToken};
  if (cond != nullptr) {
    if (!cond->embedding.empty()) {
      throw ParameterError("tiny denoiser reads token ids; external embeddings are not supported");
    }
    if (cond->token_ids.empty()) {
      throw ParameterError("conditioning '" + cond->label + "' has no tokens");
    }
    tokens = cond->token_ids;
    for (int id : tokens) {
      if (id < 0 || id >= arch_.vocab) {
        throw ParameterError("token " + std::to_string(id) + " outside the model vocabulary of " +
                             std::to_string(arch_.vocab));
      }
    }
  }
  const Params params(weights_);
  Activations act;
  forward(params, x.data().data(), input_.height, input_.width, schedule_.signal(t),
          schedule_.noise(t), tokens, act);

  EpsOutput out{Field(input_, std::move(act.eps)), std::nullopt};
  AttentionStash stash(1, arch_.heads, static_cast<int>(tokens.size()), input_.height / 4,
                       input_.width / 4);
  stash.maps = std::move(act.probs);
  out.attention = std::move(stash);
  return out;
}

LossAndGradient tiny_loss_gradient(const Weights& weights, const NoiseSchedule& schedule,
                                   const Field& x_t, int t, const std::vector<int>& context,
                                   const Field& target_eps) {
  const Params params(weights);
  check_input(params.arch, x_t.shape());
  require_same_shape(x_t.shape(), target_eps.shape(), "tiny loss target");
  Activations act;
  forward(params, x_t.data().data(), x_t.shape().height, x_t.shape().width, schedule.signal(t),
          schedule.noise(t), context, act);
  LossAndGradient out;
  out.gradients = zero_gradients(weights);
  std::vector<float> deps(act.eps.size());
  const double n = static_cast<double>(act.eps.size());
  double loss = 0.0;
  for (std::size_t i = 0; i < deps.size(); ++i) {
    const double d = static_cast<double>(act.eps[i]) - target_eps[i];
    loss += d * d;
    deps[i] = static_cast<float>(2.0 * d / n);
  }
  out.loss = loss / n;
  backward(params, act, deps, out.gradients);
  return out;
}

TrainingReport train_tiny_denoiser(Weights& weights, const NoiseSchedule& schedule,
                                   const std::function<TrainingExample(std::uint64_t)>& examples,
                                   const TrainingOptions& options) {
  if (options.steps <= 0 || options.batch <= 0) throw ParameterError("training needs steps, batch > 0");
  const TinyArchitecture arch = infer_architecture(weights);
  CounterRng rng(options.seed, NoiseDomain::training, 0);

  std::vector<std::vector<float>> m = zero_gradients(weights);
  std::vector<std::vector<float>> v = zero_gradients(weights);
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEpsilon = 1e-8;

  TrainingReport report;
  double window = 0.0;
  int window_count = 0;
  for (int step = 0; step < options.steps; ++step) {
    std::vector<std::vector<float>> grad = zero_gradients(weights);
    double batch_loss = 0.0;
    const Params params(weights);
    for (int b = 0; b < options.batch; ++b) {
      const TrainingExample ex =
          examples(static_cast<std::uint64_t>(step) * options.batch + static_cast<std::uint64_t>(b));
      check_input(arch, ex.x0.shape());
      const int t = 1 + static_cast<int>(rng.below(static_cast<std::uint32_t>(schedule.steps())));
      const Field noise = rng.normal_field(ex.x0.shape());
      const double a = schedule.signal(t);
      const double s = schedule.noise(t);
      Field x_t(ex.x0.shape());
      for (std::size_t i = 0; i < x_t.size(); ++i) x_t[i] = static_cast<float>(a * ex.x0[i] + s * noise[i]);

      std::vector<int> context{TinyDenoiser::kStartToken};
      if (rng.uniform() >= options.caption_dropout) {
        std::vector<int> kept;
        for (int tok : ex.tokens) {
          if (rng.uniform() >= options.token_dropout) kept.push_back(tok);
        }
        for (std::size_t i = kept.size(); i > 1; --i) {
          std::swap(kept[i - 1], kept[rng.below(static_cast<std::uint32_t>(i))]);
        }
        context.insert(context.end(), kept.begin(), kept.end());
      }

      Activations act;
      forward(params, x_t.data().data(), x_t.shape().height, x_t.shape().width, a, s, context, act);
      std::vector<float> deps(act.eps.size());
      const double weight = std::clamp(s * s / (a * a), 1.0, std::max(1.0, options.noise_weight_cap));
      const double n = static_cast<double>(act.eps.size()) * options.batch / weight;
      for (std::size_t i = 0; i < deps.size(); ++i) {
        const double d = static_cast<double>(act.eps[i]) - noise[i];
        batch_loss += d * d / static_cast<double>(act.eps.size());
        deps[i] = static_cast<float>(2.0 * d / n);
      }
      backward(params, act, deps, grad);
    }
    batch_loss /= options.batch;

    grad[kAttnHeads][0] = 0.0f;  // architecture metadata, not trainable
    std::fill(grad[kTokEmb].begin(), grad[kTokEmb].begin() + arch.embed_dim, 0.0f);
    double norm2 = 0.0;
    for (const auto& g : grad) {
      for (float x : g) norm2 += static_cast<double>(x) * x;
    }
    const double norm = std::sqrt(norm2);
    const double clip = norm > options.grad_clip ? options.grad_clip / norm : 1.0;

    const double progress = options.steps > 1 ? static_cast<double>(step) / (options.steps - 1) : 1.0;
    const double lr = options.final_learning_rate +
                      0.5 * (options.learning_rate - options.final_learning_rate) *
                          (1.0 + std::cos(progress * 3.14159265358979323846));
    const double bc1 = 1.0 - std::pow(kBeta1, step + 1);
    const double bc2 = 1.0 - std::pow(kBeta2, step + 1);
    auto& tensors = weights.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
      if (static_cast<int>(k) == kAttnHeads) continue;
      auto& data = tensors[k].data;
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = grad[k][i] * clip;
        m[k][i] = static_cast<float>(kBeta1 * m[k][i] + (1.0 - kBeta1) * g);
        v[k][i] = static_cast<float>(kBeta2 * v[k][i] + (1.0 - kBeta2) * g * g);
        const double mh = m[k][i] / bc1;
        const double vh = v[k][i] / bc2;
        data[i] = static_cast<float>(data[i] - lr * mh / (std::sqrt(vh) + kEpsilon));
      }
    }

    window += batch_loss;
    ++window_count;
    if (window_count == 50 || step + 1 == options.steps) {
      report.loss_windows.push_back(window / window_count);
      window = 0.0;
      window_count = 0;
    }
    report.final_loss = batch_loss;
  }
  return report;
}

}  // namespace ledits
