from tvamh.cli import main

main(prog_name="tvamh")
