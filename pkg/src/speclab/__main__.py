from speclab.cli import main

main()
