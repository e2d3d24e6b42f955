#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "llmcodec/icl.hpp"

namespace testutil {

// Structures of the emotion classification and spoken-digit generation prompts.
inline llmcodec::icl::Episode emotion_episode(std::size_t repeats, bool induction) {
    llmcodec::icl::Episode ep;
    ep.task_kind = llmcodec::icl::TaskKind::Classification;
    if (induction) ep.induction = "";
    ep.label_set = {"Happy", "Sad"};
    ep.demonstrations = {{"<token sequence from a happy emotion of audio>", "happy"},
                         {"<token sequence from a sad emotion of audio>", "sad"}};
    ep.repeats = repeats;
    ep.query = "<token sequence from the query audio>";
    ep.answer = "happy";
    return ep;
}

inline llmcodec::icl::Episode digits_episode(std::size_t repeats, bool induction) {
    llmcodec::icl::Episode ep;
    ep.task_kind = llmcodec::icl::TaskKind::Generation;
    if (induction)
        ep.induction = "Learn a foreign language for different digits, then generate the corresponding number using "
                       "foreign language based on instruction";
    for (int k = 1; k <= 3; ++k)
        ep.demonstrations.push_back(
            {"<an audio of " + std::to_string(k) + ">", "<token sequence of audio " + std::to_string(k) + ">"});
    ep.repeats = repeats;
    ep.query = "<an audio of 1+1>";
    return ep;
}

// Balanced 2-way episodes whose classes draw tokens from disjoint pools.
inline std::vector<llmcodec::icl::Episode> separable_episodes(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto clip = [&rng](int cls) {
        std::string out;
        for (int t = 0; t < 12; ++t) {
            if (t) out += ' ';
            out += "w" + std::to_string(cls * 100 + static_cast<int>(rng() % 4));
        }
        return out;
    };
    std::vector<llmcodec::icl::Episode> eps;
    for (std::size_t i = 0; i < count; ++i) {
        llmcodec::icl::Episode ep;
        ep.induction = "";
        ep.label_set = {"happy", "sad"};
        const bool swap = rng() % 2;
        ep.demonstrations = {{clip(0), "happy"}, {clip(1), "sad"}};
        if (swap) std::swap(ep.demonstrations[0], ep.demonstrations[1]);
        const int cls = static_cast<int>(i % 2);
        ep.query = clip(cls);
        ep.answer = cls == 0 ? "happy" : "sad";
        eps.push_back(std::move(ep));
    }
    return eps;
}

}  // namespace testutil
