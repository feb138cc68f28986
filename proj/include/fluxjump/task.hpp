#pragma once

#include <array>
#include <string>
#include <string_view>

#include "fluxjump/error.hpp"

namespace fluxjump {

enum class Task { aut_brick, aut_paperclip, vft_animals };
enum class Source { human, llm };

inline constexpr std::array<Task, 3> kAllTasks{Task::aut_brick, Task::aut_paperclip, Task::vft_animals};

inline std::string_view to_string(Task t) {
    switch (t) {
        case Task::aut_brick: return "aut_brick";
        case Task::aut_paperclip: return "aut_paperclip";
        case Task::vft_animals: return "vft_animals";
    }
    return "?";
}

inline std::string_view to_string(Source s) { return s == Source::human ? "human" : "llm"; }

inline Task task_from_string(std::string_view s) {
    for (Task t : kAllTasks)
        if (to_string(t) == s) return t;
    throw Error("unknown task '" + std::string(s) + "'");
}

inline Source source_from_string(std::string_view s) {
    if (s == "human") return Source::human;
    if (s == "llm") return Source::llm;
    throw Error("unknown source '" + std::string(s) + "'");
}

inline bool is_aut(Task t) { return t != Task::vft_animals; }

/// The object named in the prompt: "brick", "paperclip", "animals".
inline std::string_view task_object(Task t) {
    switch (t) {
        case Task::aut_brick: return "brick";
        case Task::aut_paperclip: return "paperclip";
        case Task::vft_animals: return "animals";
    }
    return "?";
}

}  // namespace fluxjump
