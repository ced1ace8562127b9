// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace jointkb
{

class Error: public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files.
class LoadError: public Error
{
  public:
    using Error::Error;
};

// Unknown entity / relation identifier.
class LookupError: public Error
{
  public:
    using Error::Error;
};

class ArgumentError: public Error
{
  public:
    using Error::Error;
};

// No relation could be linked to a surface string.
class LinkError: public Error
{
  public:
    using Error::Error;
};

class TrainingError: public Error
{
  public:
    using Error::Error;
};

// Operation invoked on an object in the wrong state (e.g. untrained model).
class StateError: public Error
{
  public:
    using Error::Error;
};

// Network failure talking to a remote completer or chat endpoint.
class TransportError: public Error
{
  public:
    using Error::Error;
};

class RenderError: public Error
{
  public:
    using Error::Error;
};

// Scripted LLM transcript mismatch or exhaustion.
class ScriptError: public Error
{
  public:
    using Error::Error;
};

class ParseError: public Error
{
  public:
    using Error::Error;
};

} // namespace jointkb
