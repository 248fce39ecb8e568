#pragma once

// Process exit codes for the chartsum binary. Stable: scripts depend on them.

#include "chartsum/fa_judge.hpp"
#include "chartsum/summarizer_node.hpp"

namespace chartsum {

enum class ExitCode : int {
    Ok = 0,
    Failure = 1,
    Usage = 2,
    UnknownPatient = 3,
    RetrievalUnavailable = 4,
    ModelUnavailable = 5,
    GenerationTimeout = 6,
    OutputUnparseable = 7,
    InputError = 8,
    JudgeFailure = 9,
    ZeroClaims = 10,
    IndexError = 11,
};

inline ExitCode exit_code_for(FailureKind k) {
    switch (k) {
        case FailureKind::UnknownPatient: return ExitCode::UnknownPatient;
        case FailureKind::RetrievalUnavailable: return ExitCode::RetrievalUnavailable;
        case FailureKind::ModelUnavailable: return ExitCode::ModelUnavailable;
        case FailureKind::GenerationTimeout: return ExitCode::GenerationTimeout;
        case FailureKind::OutputUnparseable: return ExitCode::OutputUnparseable;
        case FailureKind::BadRequest: return ExitCode::Usage;
        case FailureKind::EmbedFailure:
        case FailureKind::ContextOverflow:
        case FailureKind::Internal: return ExitCode::Failure;
    }
    return ExitCode::Failure;
}

inline ExitCode exit_code_for(JudgeError::Kind k) {
    return k == JudgeError::Kind::ZeroClaims ? ExitCode::ZeroClaims : ExitCode::JudgeFailure;
}

}  // namespace chartsum
