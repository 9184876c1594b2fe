from backend.api.cli import main

main()
