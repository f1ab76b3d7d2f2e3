#pragma once

namespace odp {

/// Entry point for the odp tool: dispatches
///   odp prep|synth|train|eval|predict --config <file> [--set key=value ...]
/// Returns the process exit code: 0 success, 1 configuration problem,
/// 2 missing/unreadable input, 3 incompatible checkpoint or workspace.
int cli_main(int argc, const char* const* argv);

}  // namespace odp
