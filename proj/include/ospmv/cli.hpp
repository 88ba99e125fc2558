// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace ospmv {

/// Entry point of the `ospmv` tool. Returns 0 on success, 1 on invalid
/// input, 2 when a run fails.
int cli_main(int argc, char** argv);

}  // namespace ospmv
