// tplda/cli.h

// Copyright 2026  tplda authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef TPLDA_CLI_H_
#define TPLDA_CLI_H_

#include <string>
#include <vector>

namespace tplda {

/// Runs one toolkit subcommand (gen, train-bg, init, train, mixup, score,
/// classify, count-params, inspect). `args` excludes the program name.
/// Returns 0 on success, 1 on usage errors, 2 on data/format errors, 3 on
/// numerical failures.
int run(const std::vector<std::string>& args);

/// main()-style wrapper; argv[0] is skipped.
int run(int argc, const char* const* argv);

}  // namespace tplda

#endif  // TPLDA_CLI_H_
