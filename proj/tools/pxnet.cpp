#include <gsl/gsl_errno.h>

#include <string>
#include <vector>

#include "pxnet/cli.hpp"

int main(int argc, char** argv) {
    gsl_set_error_handler_off();
    return pxnet::cli::run_cli(std::vector<std::string>(argv, argv + argc));
}
