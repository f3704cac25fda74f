#pragma once

#include <stdexcept>
#include <string>

namespace vole
{

/// Coarse classification used by the CLI to pick an exit status.
enum class ErrorCategory
{
    Domain, // argument outside the mathematical domain of an operation
    Config, // invalid parameters or configuration
    Unsupported, // parameter combination the construction does not cover
    Numeric, // overflow, non-convergence, bracketing failure
    Bounds, // index or time outside a recorded horizon
    Io,
};

class Error : public std::runtime_error
{
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what)
        , m_category(category)
    {
    }

    ErrorCategory category() const noexcept
    {
        return m_category;
    }

    const char* category_name() const noexcept
    {
        switch (m_category) {
        case ErrorCategory::Domain:
            return "domain";
        case ErrorCategory::Config:
            return "config";
        case ErrorCategory::Unsupported:
            return "unsupported";
        case ErrorCategory::Numeric:
            return "numeric";
        case ErrorCategory::Bounds:
            return "bounds";
        case ErrorCategory::Io:
            return "io";
        }
        return "unknown";
    }

private:
    ErrorCategory m_category;
};

inline Error domain_error(const std::string& what)
{
    return Error(ErrorCategory::Domain, what);
}
inline Error config_error(const std::string& what)
{
    return Error(ErrorCategory::Config, what);
}
inline Error unsupported_error(const std::string& what)
{
    return Error(ErrorCategory::Unsupported, what);
}
inline Error numeric_error(const std::string& what)
{
    return Error(ErrorCategory::Numeric, what);
}
inline Error bounds_error(const std::string& what)
{
    return Error(ErrorCategory::Bounds, what);
}
inline Error io_error(const std::string& what)
{
    return Error(ErrorCategory::Io, what);
}

} // namespace vole
