#pragma once

// Independent reference implementations the tests compare the library
// against. Nothing here calls into chartsum's scoring, search or splitting
// code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

// fa_raw for the default weights as an exact fraction: weights times 4 are
// the integers (20, -15, 5), so fa_raw = (20S - 15C + 5U) / (4N).
struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

inline Fraction fa_raw_default(std::int64_t s, std::int64_t c, std::int64_t u) {
    const std::int64_t n = s + c + u;
    Fraction f{20 * s - 15 * c + 5 * u, 4 * n};
    const std::int64_t g = std::gcd(f.num < 0 ? -f.num : f.num, f.den);
    if (g > 1) {
        f.num /= g;
        f.den /= g;
    }
    return f;
}

inline double fa_clipped_default(std::int64_t s, std::int64_t c, std::int64_t u) {
    const Fraction f = fa_raw_default(s, c, u);
    if (f.num <= 0) return 0.0;
    if (f.num >= 5 * f.den) return 5.0;
    return f.value();
}

// Brute-force top-k over row-major vectors using double accumulation and a
// full sort, ties broken by id.
struct Hit {
    std::string id;
    double score;
};

inline std::vector<Hit> brute_topk(const std::vector<std::vector<float>>& rows, const std::vector<std::string>& ids,
                                   const std::vector<float>& q, std::size_t k) {
    std::vector<Hit> all;
    all.reserve(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        double dot = 0;
        for (std::size_t d = 0; d < q.size(); ++d) dot += static_cast<double>(rows[i][d]) * q[d];
        all.push_back({ids[i], dot});
    }
    std::sort(all.begin(), all.end(), [](const Hit& a, const Hit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    all.resize(std::min(k, all.size()));
    return all;
}

inline std::vector<float> random_unit(std::mt19937_64& rng, std::size_t dims) {
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> v(dims);
    double n2 = 0;
    for (auto& x : v) {
        x = g(rng);
        n2 += x * x;
    }
    const double n = std::sqrt(n2);
    std::vector<float> out(dims);
    for (std::size_t i = 0; i < dims; ++i) out[i] = static_cast<float>(v[i] / n);
    return out;
}

// Checks [begin, end) ranges tile [0, total) with no gaps or overlaps.
inline bool tiles(const std::vector<std::pair<std::uint64_t, std::uint64_t>>& spans, std::uint64_t total) {
    std::uint64_t at = 0;
    for (const auto& [b, e] : spans) {
        if (b != at || e <= b) return false;
        at = e;
    }
    return at == total;
}

// ceil(bytes / 4), the token estimate the chunk cap is stated in.
inline std::uint64_t tokens(const std::string& s) { return (s.size() + 3) / 4; }

// Synthetic note text: header lines, blank-line paragraphs and, on demand,
// long unbroken runs with multi-byte characters.
inline std::string synthetic_note(std::mt19937_64& rng, const std::vector<std::string>& headers) {
    static const std::vector<std::string> words = {"patient", "reports", "pain",  "denies", "fever", "mg",
                                                   "daily",   "BP",      "140/90", "stable", "history",
                                                   "of",      "and",     "the",   "no",     "acute"};
    std::uniform_int_distribution<int> coin(0, 9);
    std::string out;
    const int sections = 1 + coin(rng) % 6;
    for (int s = 0; s < sections; ++s) {
        if (coin(rng) < 7) out += headers[static_cast<std::size_t>(coin(rng)) % headers.size()] + " ";
        const int paras = 1 + coin(rng) % 3;
        for (int p = 0; p < paras; ++p) {
            const int kind = coin(rng);
            if (kind == 0) {
                // Unbroken run longer than any sane cap, with UTF-8 pieces.
                const int len = 300 + coin(rng) * 200;
                for (int i = 0; i < len; ++i) out += (i % 7 == 3) ? "\xc3\xa9" : "x";
            } else {
                const int n = 5 + coin(rng) * 30;
                for (int i = 0; i < n; ++i) {
                    out += words[static_cast<std::size_t>(rng() % words.size())];
                    out += (i % 13 == 12) ? "\n" : " ";
                }
            }
            out += (coin(rng) < 5) ? "\n\n" : "\n \n\t\n";
        }
    }
    if (coin(rng) < 3) out += "trailing text without newline";
    return out;
}

}  // namespace oracle
